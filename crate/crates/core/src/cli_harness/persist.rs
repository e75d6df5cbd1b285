use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::chart_geometry::{validate_symplectic, ConnectionData, ConnectionEntry};
use crate::coeff_ring::{ChartSpec, CoeffFn, TermRecord};
use crate::fedosov_engine::{geometry_hash, FedosovState, StarTable};
use crate::weyl_algebra::{Caps, SectionTermRecord, WeylSection};

pub const FORMAT_VERSION: u32 = 1;

const STATE_KIND: &str = "fedosov-state";
const TABLE_KIND: &str = "star-table";

/// A solved connection on disk. `geometry_hash` covers the inputs,
/// `payload_hash` the hash and `γ` together.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDocument {
    pub format_version: u32,
    pub kind: String,
    pub chart: ChartSpec,
    pub caps: Caps,
    pub symplectic: Vec<Vec<Vec<TermRecord>>>,
    pub connection: Vec<ConnectionEntry>,
    pub weyl_curvature: Vec<SectionTermRecord>,
    pub gamma: Vec<SectionTermRecord>,
    pub geometry_hash: String,
    pub payload_hash: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntryRecord {
    pub i: usize,
    pub j: usize,
    pub q: Vec<Vec<TermRecord>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDocument {
    pub format_version: u32,
    pub kind: String,
    pub chart: ChartSpec,
    pub caps: Caps,
    pub geometry_hash: String,
    pub basis: Vec<Vec<TermRecord>>,
    pub entries: Vec<TableEntryRecord>,
    pub payload_hash: String,
}

fn sha256_json<T: Serialize>(value: &T) -> String {
    format!("{:x}", Sha256::digest(serde_json::to_vec(value).expect("document serializes")))
}

fn state_payload_hash(geometry: &str, gamma: &[SectionTermRecord]) -> String {
    sha256_json(&(geometry, gamma))
}

fn table_payload_hash(doc: &TableDocument) -> String {
    sha256_json(&(&doc.chart, &doc.caps, &doc.geometry_hash, &doc.basis, &doc.entries))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("document serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, kind: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(super::json_error)?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        other => return Err(CliError::Version(format!("format_version {other:?}, expected {FORMAT_VERSION}"))),
    }
    match value.get("kind").and_then(|v| v.as_str()) {
        Some(k) if k == kind => {}
        other => return Err(CliError::Version(format!("document kind {other:?}, expected {kind:?}"))),
    }
    serde_json::from_value(value).map_err(|e| CliError::Parse { location: path.display().to_string(), message: e.to_string() })
}

pub fn state_document(state: &FedosovState) -> StateDocument {
    let chart = state.chart();
    let dim = chart.dim();
    let gamma = state.gamma().to_records();
    let geometry = state.geometry_hash();
    StateDocument {
        format_version: FORMAT_VERSION,
        kind: STATE_KIND.to_string(),
        chart,
        caps: state.caps(),
        symplectic: (0..dim).map(|i| (0..dim).map(|j| state.symplectic().lower(i, j).to_records()).collect()).collect(),
        connection: state.connection().to_entries(),
        weyl_curvature: state.omega().to_records(),
        payload_hash: state_payload_hash(&geometry, &gamma),
        gamma,
        geometry_hash: geometry,
    }
}

pub fn persist_state(state: &FedosovState, path: &Path) -> Result<(), CliError> {
    write_json(&state_document(state), path)
}

/// Rebuilds the state, recomputing both hashes. With `expected_geometry`
/// set, also refuses a document solved for a different geometry.
pub fn restore_state(path: &Path, expected_geometry: Option<&str>) -> Result<FedosovState, CliError> {
    let doc: StateDocument = read_json(path, STATE_KIND)?;
    let chart = ChartSpec::new(doc.chart.n, doc.chart.k).map_err(|e| CliError::validation("chart", e))?;
    let ctx = |what: &str| format!("{}: {what}", path.display());
    let mut matrix = Vec::new();
    for row in &doc.symplectic {
        let row = row.iter().map(|r| CoeffFn::from_records(chart, r)).collect::<Result<Vec<_>, _>>();
        matrix.push(row.map_err(|e| CliError::validation(ctx("symplectic"), e))?);
    }
    let s = validate_symplectic(chart, &matrix).map_err(|e| CliError::validation(ctx("symplectic"), e))?;
    let c = ConnectionData::from_entries(&s, &doc.connection).map_err(|e| CliError::validation(ctx("connection"), e))?;
    let omega = WeylSection::from_records(chart, doc.caps, &doc.weyl_curvature).map_err(|e| CliError::validation(ctx("weyl_curvature"), e))?;
    let gamma = WeylSection::from_records(chart, doc.caps, &doc.gamma).map_err(|e| CliError::validation(ctx("gamma"), e))?;
    let computed = geometry_hash(&s, &c, &omega, doc.caps);
    if computed != doc.geometry_hash {
        return Err(CliError::HashMismatch { what: ctx("geometry"), stored: doc.geometry_hash, computed });
    }
    if let Some(expected) = expected_geometry {
        if expected != computed {
            return Err(CliError::HashMismatch { what: ctx("geometry vs problem"), stored: computed, computed: expected.to_string() });
        }
    }
    let payload = state_payload_hash(&computed, &gamma.to_records());
    if payload != doc.payload_hash {
        return Err(CliError::HashMismatch { what: ctx("payload"), stored: doc.payload_hash, computed: payload });
    }
    Ok(FedosovState::from_parts(s, c, omega, gamma, doc.caps))
}

pub fn table_document(table: &StarTable) -> TableDocument {
    let mut doc = TableDocument {
        format_version: FORMAT_VERSION,
        kind: TABLE_KIND.to_string(),
        chart: table.chart,
        caps: table.caps,
        geometry_hash: table.geometry_hash.clone(),
        basis: table.basis.iter().map(CoeffFn::to_records).collect(),
        entries: table
            .entries
            .iter()
            .map(|(&(i, j), q)| TableEntryRecord { i, j, q: q.iter().map(CoeffFn::to_records).collect() })
            .collect(),
        payload_hash: String::new(),
    };
    doc.payload_hash = table_payload_hash(&doc);
    doc
}

pub fn persist_table(table: &StarTable, path: &Path) -> Result<(), CliError> {
    write_json(&table_document(table), path)
}

pub fn restore_table(path: &Path, expected_geometry: Option<&str>) -> Result<StarTable, CliError> {
    let doc: TableDocument = read_json(path, TABLE_KIND)?;
    let computed = table_payload_hash(&doc);
    let ctx = |what: &str| format!("{}: {what}", path.display());
    if computed != doc.payload_hash {
        return Err(CliError::HashMismatch { what: ctx("payload"), stored: doc.payload_hash, computed });
    }
    if let Some(expected) = expected_geometry {
        if expected != doc.geometry_hash {
            return Err(CliError::HashMismatch { what: ctx("geometry"), stored: doc.geometry_hash, computed: expected.to_string() });
        }
    }
    let chart = ChartSpec::new(doc.chart.n, doc.chart.k).map_err(|e| CliError::validation("chart", e))?;
    let parse = |r: &[TermRecord], what: &str| CoeffFn::from_records(chart, r).map_err(|e| CliError::validation(ctx(what), e));
    let basis = doc.basis.iter().map(|r| parse(r, "basis")).collect::<Result<Vec<_>, _>>()?;
    let mut entries = std::collections::BTreeMap::new();
    for e in &doc.entries {
        if e.i >= basis.len() || e.j >= basis.len() {
            return Err(CliError::validation(ctx("entries"), format!("index ({}, {}) outside the basis", e.i, e.j)));
        }
        let q = e.q.iter().map(|r| parse(r, "entries")).collect::<Result<Vec<_>, _>>()?;
        entries.insert((e.i, e.j), q);
    }
    Ok(StarTable { chart, caps: doc.caps, geometry_hash: doc.geometry_hash, basis, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart_geometry::{sample_fiber_adapted_connection, SampleBounds};
    use crate::fedosov_engine::{build_gamma, star_table};
    use crate::weyl_algebra::SymplecticData;

    fn state() -> FedosovState {
        let chart = ChartSpec::new(1, 1).unwrap();
        let caps = Caps::new(1, 4);
        let s = SymplecticData::standard(chart);
        let c = sample_fiber_adapted_connection(&s, 3, SampleBounds::default());
        build_gamma(&s, &c, &s.omega_form(caps), caps).unwrap()
    }

    #[test]
    fn state_round_trip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.json");
        let st = state();
        persist_state(&st, &path).unwrap();
        let back = restore_state(&path, Some(&st.geometry_hash())).unwrap();
        assert_eq!(back.gamma(), st.gamma());
        assert_eq!(state_document(&back), state_document(&st));

        let text = std::fs::read_to_string(&path).unwrap();
        let mut doc: StateDocument = serde_json::from_str(&text).unwrap();
        doc.gamma[0].coeff[0].re = "12345".into();
        write_json(&doc, &path).unwrap();
        assert!(matches!(restore_state(&path, None), Err(CliError::HashMismatch { .. })));

        doc.format_version = 9;
        write_json(&doc, &path).unwrap();
        assert!(matches!(restore_state(&path, None), Err(CliError::Version(_))));
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.json");
        let table = star_table(&state(), 1).unwrap();
        persist_table(&table, &path).unwrap();
        assert_eq!(restore_table(&path, Some(&table.geometry_hash)).unwrap(), table);
        assert!(matches!(restore_table(&path, Some("other")), Err(CliError::HashMismatch { .. })));
    }
}
