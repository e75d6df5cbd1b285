//! Batch front end: JSON problem files, command dispatch, persistence of
//! solved states and tables, and text/JSON reports.

mod commands;
mod persist;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart_geometry::{
    check_fiber_adapted, sample_fiber_adapted_connection, sample_symmetric_connection, validate_connection, validate_symplectic,
    ConnectionData, ConnectionEntry, GeometryError, SampleBounds,
};
use crate::coeff_ring::{ChartSpec, CoeffError, CoeffFn, TermRecord};
use crate::fedosov_engine::{DiffOp, DiffOpSeries, DiffOpTermRecord, FedosovError};
use crate::lagrangian_forms::LagrangianError;
use crate::weyl_algebra::{Caps, SectionTermRecord, SymplecticData, WeylError, WeylSection};

pub use commands::{execute, Command, RunOptions};
pub use persist::{persist_state, persist_table, restore_state, restore_table, StateDocument, TableDocument, FORMAT_VERSION};
pub use report::{OutputFormat, Report};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CliError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("unsupported schema version {found} (supported: {supported})")]
    SchemaVersion { found: u32, supported: u32 },
    #[error("invalid input at {location}: {message}")]
    Validation { location: String, message: String },
    #[error("{0}")]
    Io(String),
    #[error("hash mismatch in {what}: stored {stored}, computed {computed}")]
    HashMismatch { what: String, stored: String, computed: String },
    #[error("unsupported document: {0}")]
    Version(String),
    #[error("internal consistency failure in {context}: {message}")]
    Internal { context: String, message: String },
}

impl CliError {
    /// 2 for input problems, 3 for internal consistency failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal { .. } => 3,
            _ => 2,
        }
    }

    pub fn validation(location: impl Into<String>, message: impl fmt::Display) -> Self {
        CliError::Validation { location: location.into(), message: message.to_string() }
    }
}

fn weyl_error(context: &str, e: WeylError) -> CliError {
    match e {
        WeylError::NotDivisible { .. } => CliError::Internal { context: context.to_string(), message: e.to_string() },
        other => CliError::validation(context, other),
    }
}

pub(crate) fn fedosov_error(context: &str, e: FedosovError) -> CliError {
    match e {
        FedosovError::Weyl(w) => weyl_error(context, w),
        FedosovError::Geometry(GeometryError::Weyl(w)) => weyl_error(context, w),
        other => CliError::validation(context, other),
    }
}

pub(crate) fn lagrangian_error(context: &str, e: LagrangianError) -> CliError {
    match e {
        LagrangianError::Weyl(w) => weyl_error(context, w),
        other => CliError::validation(context, other),
    }
}

fn coeff_error(location: String, e: CoeffError) -> CliError {
    match e {
        CoeffError::Parse(message) => CliError::Parse { location, message },
        other => CliError::validation(location, other),
    }
}

fn section_error(location: &str, e: WeylError) -> CliError {
    match e {
        WeylError::Coeff(c) => coeff_error(location.to_string(), c),
        other => CliError::validation(location, other),
    }
}

fn json_error(e: serde_json::Error) -> CliError {
    CliError::Parse { location: format!("line {}, column {}", e.line(), e.column()), message: e.to_string() }
}

/// Truncation caps as written in a problem file; `degree` defaults to `2·order`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsInput {
    pub order: u32,
    #[serde(default)]
    pub degree: Option<u32>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    #[default]
    FiberAdapted,
    Symmetric,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleInput {
    #[serde(default)]
    pub kind: SampleKind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_action_degree")]
    pub action_degree: u32,
    #[serde(default = "default_magnitude")]
    pub magnitude: i64,
}

fn default_action_degree() -> u32 {
    1
}

fn default_magnitude() -> i64 {
    2
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ConnectionInput {
    /// Lowered symbols `Γ_{xyz}`; each entry fills all index permutations.
    Entries(Vec<ConnectionEntry>),
    /// A random connection drawn with the problem seed unless one is given.
    Sample(SampleInput),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorInput {
    /// `[P_0, P_1, …]`, each a list of `{mu, coeff}` terms; `P_0` must be the identity.
    Series(Vec<Vec<DiffOpTermRecord>>),
    /// `P = exp(ℏX)` for the given operator `X`.
    Exponential(Vec<DiffOpTermRecord>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductName {
    Fedosov,
    Moyal,
    Standard,
    OppositeFedosov,
    OppositeMoyal,
    OppositeStandard,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptionsInput {
    /// Names of functions to act on (default: all).
    pub functions: Option<Vec<String>>,
    /// Ordered pairs of function names for `star` (default: all pairs).
    pub pairs: Option<Vec<[String; 2]>>,
    /// Sample functions for verification commands (default: all functions).
    pub samples: Option<Vec<String>>,
    /// Number of seeded random sample polynomials added to the samples.
    pub random_samples: Option<usize>,
    pub table_degree: Option<u32>,
    /// A differential form for `normalize-form` and `check-lagrangian`.
    pub form: Option<Vec<SectionTermRecord>>,
    pub operator: Option<OperatorInput>,
    pub left: Option<ProductName>,
    pub right: Option<ProductName>,
    pub jet_degree: Option<u32>,
    /// Reject connections that are not fiber-adapted at load time.
    pub require_fiber_adapted: bool,
}

/// The on-disk problem description.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: u32,
    pub chart: ChartSpec,
    #[serde(default)]
    pub caps: Option<CapsInput>,
    /// `ω_{jl}` as a full matrix of coefficient functions (default: standard form).
    #[serde(default)]
    pub symplectic: Option<Vec<Vec<Vec<TermRecord>>>>,
    #[serde(default)]
    pub connection: Option<ConnectionInput>,
    /// `Ω − ω`: the ℏ-dependent part of the Weyl curvature.
    #[serde(default)]
    pub omega_corrections: Vec<SectionTermRecord>,
    #[serde(default)]
    pub functions: BTreeMap<String, Vec<TermRecord>>,
    #[serde(default)]
    pub options: OptionsInput,
    #[serde(default)]
    pub seed: u64,
}

/// Command-line overrides applied while loading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Overrides {
    pub order: Option<u32>,
    pub degree: Option<u32>,
    pub seed: Option<u64>,
    pub allow_shallow_degree: bool,
}

/// A fully validated problem.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub chart: ChartSpec,
    pub caps: Caps,
    /// `D < 2N` was explicitly allowed, so `Q_N` may be truncated.
    pub shallow: bool,
    pub symplectic: SymplecticData,
    pub connection: ConnectionData,
    pub omega: WeylSection,
    pub functions: BTreeMap<String, CoeffFn>,
    pub form: Option<WeylSection>,
    pub operator: Option<DiffOpSeries>,
    pub options: OptionsInput,
    pub seed: u64,
}

impl ProblemSpec {
    /// Caps used for pure differential forms (Weyl degree `2·ℏ`-power).
    pub fn form_caps(&self) -> Caps {
        Caps::new(self.caps.order, 2 * self.caps.order.max(1))
    }

    pub fn function(&self, name: &str, location: &str) -> Result<&CoeffFn, CliError> {
        self.functions.get(name).ok_or_else(|| CliError::validation(location, format!("unknown function {name:?}")))
    }
}

pub fn load_problem(path: &Path, overrides: &Overrides) -> Result<ProblemSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_problem(&text, overrides)
}

pub fn parse_problem(text: &str, overrides: &Overrides) -> Result<ProblemSpec, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(json_error)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64());
    match found {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(CliError::SchemaVersion { found: v as u32, supported: SCHEMA_VERSION }),
        None => return Err(CliError::validation("schema_version", "missing or not an integer")),
    }
    let file: ProblemFile =
        serde_json::from_str(text).map_err(json_error)?;
    validate_problem(file, overrides)
}

pub fn validate_problem(file: ProblemFile, overrides: &Overrides) -> Result<ProblemSpec, CliError> {
    let chart = ChartSpec::new(file.chart.n, file.chart.k).map_err(|e| CliError::validation("chart", e))?;
    let order = overrides.order.or(file.caps.map(|c| c.order)).unwrap_or(2);
    let degree = overrides.degree.or(file.caps.and_then(|c| c.degree)).unwrap_or(2 * order);
    let shallow = degree < 2 * order;
    if shallow && !overrides.allow_shallow_degree {
        return Err(CliError::validation(
            "caps",
            format!("degree D = {degree} is below 2N = {}; pass --allow-shallow-degree to accept possibly truncated ℏ^{order} terms", 2 * order),
        ));
    }
    let caps = Caps::new(order, degree);
    let seed = overrides.seed.unwrap_or(file.seed);

    let symplectic = match &file.symplectic {
        None => SymplecticData::standard(chart),
        Some(rows) => {
            let mut matrix = Vec::new();
            for (i, row) in rows.iter().enumerate() {
                let mut out = Vec::new();
                for (j, entry) in row.iter().enumerate() {
                    out.push(CoeffFn::from_records(chart, entry).map_err(|e| coeff_error(format!("symplectic[{i}][{j}]"), e))?);
                }
                matrix.push(out);
            }
            validate_symplectic(chart, &matrix).map_err(|e| CliError::validation("symplectic", e))?
        }
    };

    let connection = match &file.connection {
        None => ConnectionData::zero(chart),
        Some(ConnectionInput::Entries(entries)) => {
            for (idx, e) in entries.iter().enumerate() {
                CoeffFn::from_records(chart, &e.coeff).map_err(|err| coeff_error(format!("connection.entries[{idx}].coeff"), err))?;
            }
            ConnectionData::from_entries(&symplectic, entries).map_err(|e| CliError::validation("connection.entries", e))?
        }
        Some(ConnectionInput::Sample(sample)) => {
            let bounds = SampleBounds { action_degree: sample.action_degree, magnitude: sample.magnitude };
            let seed = sample.seed.unwrap_or(seed);
            match sample.kind {
                SampleKind::FiberAdapted => sample_fiber_adapted_connection(&symplectic, seed, bounds),
                SampleKind::Symmetric => sample_symmetric_connection(&symplectic, seed, bounds),
            }
        }
    };
    if file.connection.is_some() {
        validate_connection(&connection, &symplectic).map_err(|e| CliError::validation("connection", e))?;
    }
    if file.options.require_fiber_adapted {
        let report = check_fiber_adapted(&connection);
        if let Some(v) = report.violations.first() {
            return Err(CliError::validation(
                format!("connection{:?}", v.indices),
                format!("connection is not fiber-adapted: {} (value {})", v.constraint, v.value),
            ));
        }
    }

    let corrections =
        WeylSection::from_records(chart, caps, &file.omega_corrections).map_err(|e| section_error("omega_corrections", e))?;
    let omega = symplectic.omega_form(caps).add(&corrections);

    let mut functions = BTreeMap::new();
    for (name, records) in &file.functions {
        let f = CoeffFn::from_records(chart, records).map_err(|e| coeff_error(format!("functions.{name}"), e))?;
        functions.insert(name.clone(), f);
    }

    let form_caps = Caps::new(order, 2 * order.max(1));
    let form = match &file.options.form {
        None => None,
        Some(records) => {
            let f = WeylSection::from_records(chart, form_caps, records).map_err(|e| section_error("options.form", e))?;
            if f.has_fiber_variables() {
                return Err(CliError::validation("options.form", "a differential form cannot contain fiber variables"));
            }
            Some(f)
        }
    };

    let operator = match &file.options.operator {
        None => None,
        Some(OperatorInput::Series(ops)) => {
            Some(DiffOpSeries::from_records(chart, ops).map_err(|e| CliError::validation("options.operator.series", e))?)
        }
        Some(OperatorInput::Exponential(x)) => {
            let x = DiffOp::from_records(chart, x).map_err(|e| CliError::validation("options.operator.exponential", e))?;
            Some(DiffOpSeries::exponential(&x, order))
        }
    };

    for (key, names) in [("options.functions", &file.options.functions), ("options.samples", &file.options.samples)] {
        if let Some(names) = names {
            if let Some(bad) = names.iter().find(|n| !functions.contains_key(*n)) {
                return Err(CliError::validation(key, format!("unknown function {bad:?}")));
            }
        }
    }
    if let Some(pairs) = &file.options.pairs {
        if let Some(bad) = pairs.iter().flatten().find(|n| !functions.contains_key(*n)) {
            return Err(CliError::validation("options.pairs", format!("unknown function {bad:?}")));
        }
    }

    Ok(ProblemSpec {
        chart,
        caps,
        shallow,
        symplectic,
        connection,
        omega,
        functions,
        form,
        operator,
        options: file.options,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema_version": 1, "chart": {"n": 1, "k": 1}}"#;

    #[test]
    fn loads_minimal_flat_problem() {
        let spec = parse_problem(MINIMAL, &Overrides::default()).unwrap();
        assert_eq!(spec.caps, Caps::new(2, 4));
        assert!(spec.connection.is_zero());
        assert_eq!(spec.omega, spec.symplectic.omega_form(spec.caps));
    }

    #[test]
    fn load_errors() {
        let e = parse_problem(r#"{"schema_version": 7, "chart": {"n": 1, "k": 1}}"#, &Overrides::default()).unwrap_err();
        assert!(matches!(e, CliError::SchemaVersion { found: 7, .. }));
        let e = parse_problem(r#"{"schema_version": 1, "chart": {"n": 1, "k": 1}, "extra": 1}"#, &Overrides::default()).unwrap_err();
        assert!(matches!(e, CliError::Parse { .. }));
        let bad_rational = r#"{"schema_version": 1, "chart": {"n": 1, "k": 1},
            "functions": {"f": [{"alpha": [1], "beta": [0], "m": [0], "re": "1/0"}]}}"#;
        let e = parse_problem(bad_rational, &Overrides::default()).unwrap_err();
        assert!(matches!(e, CliError::Parse { ref location, .. } if location == "functions.f"), "{e}");
        let shallow = Overrides { order: Some(3), degree: Some(4), ..Default::default() };
        assert!(parse_problem(MINIMAL, &shallow).is_err());
        let allowed = Overrides { allow_shallow_degree: true, ..shallow };
        assert!(parse_problem(MINIMAL, &allowed).unwrap().shallow);
    }

    #[test]
    fn non_adapted_connection_rejected_when_required() {
        let text = r#"{"schema_version": 1, "chart": {"n": 1, "k": 1},
            "connection": {"entries": [{"indices": [0, 1, 1], "coeff": [{"alpha": [0], "beta": [0], "m": [0], "re": "1"}]}]},
            "options": {"require_fiber_adapted": true}}"#;
        let e = parse_problem(text, &Overrides::default()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("Γ_{Iφφ} must vanish"), "{e}");
    }
}
