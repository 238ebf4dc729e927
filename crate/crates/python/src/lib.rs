//! Python bindings: gateway encryption, rule compilation, inspection and the plaintext oracle.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use rand::rngs::OsRng;

use shvebox_core::compile::{compile_filter, compile_patterns, EncryptedFilter, EncryptedRuleDb};
use shvebox_core::crypto;
use shvebox_core::engine::{self, ScanMode};
use shvebox_core::rules::parse_ruleset;
use shvebox_core::wire::{decode_frame, encode_frame, encode_verdict};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen)]
struct MasterKey(crypto::MasterKey);

#[pymethods]
impl MasterKey {
    #[staticmethod]
    fn generate() -> Self {
        MasterKey(crypto::MasterKey::generate(&mut OsRng))
    }

    #[new]
    fn new(raw: &[u8]) -> PyResult<Self> {
        crypto::MasterKey::from_bytes(raw).map(MasterKey).map_err(value_err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.as_bytes())
    }

    fn __repr__(&self) -> String {
        "MasterKey(<redacted>)".into()
    }
}

#[pyclass(frozen)]
struct EncryptedPacket(crypto::EncryptedPacket);

#[pymethods]
impl EncryptedPacket {
    #[staticmethod]
    fn from_frame(frame: &[u8]) -> PyResult<Self> {
        decode_frame(frame).map(EncryptedPacket).map_err(value_err)
    }

    #[getter]
    fn packet_id(&self) -> u64 {
        self.0.packet_id
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn to_frame<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &encode_frame(&self.0))
    }
}

#[pyclass(frozen)]
struct Gateway(shvebox_core::gateway::Gateway);

#[pymethods]
impl Gateway {
    #[new]
    fn new(key: &MasterKey) -> Self {
        Gateway(shvebox_core::gateway::Gateway::new(&key.0))
    }

    /// Encrypts a payload of 1..=1500 bytes.
    fn encrypt(&self, payload: &[u8], packet_id: u64) -> PyResult<EncryptedPacket> {
        self.0.preprocess(payload, packet_id).map(EncryptedPacket).map_err(value_err)
    }
}

#[pyclass(frozen, get_all)]
struct Verdict {
    packet_id: u64,
    decision: String,
    /// `(rule_id, position, action)` tuples sorted by position.
    matches: Vec<(u32, u16, String)>,
    record: String,
    raw: Vec<u8>,
}

impl From<engine::Verdict> for Verdict {
    fn from(v: engine::Verdict) -> Self {
        Verdict {
            packet_id: v.packet_id,
            decision: v.decision.as_str().into(),
            matches: v.matches.iter().map(|m| (m.rule_id, m.position, m.action.as_str().into())).collect(),
            record: v.to_string(),
            raw: encode_verdict(&v),
        }
    }
}

#[pymethods]
impl Verdict {
    fn __repr__(&self) -> String {
        format!("Verdict({})", self.record)
    }
}

#[pyclass(frozen)]
struct Inspector(engine::Inspector);

#[pymethods]
impl Inspector {
    /// Compiles a ruleset under `key` with fresh trapdoor randomness.
    #[staticmethod]
    fn compile(key: &MasterKey, rules: &str) -> PyResult<Self> {
        let rules = parse_ruleset(rules).map_err(value_err)?;
        let db = compile_patterns(&key.0, &rules, &mut OsRng);
        let filter = compile_filter(&key.0, &rules, &mut OsRng);
        Ok(Inspector(engine::Inspector::new(db, filter)))
    }

    #[staticmethod]
    fn load(db: &[u8], filter: &[u8]) -> PyResult<Self> {
        let db = EncryptedRuleDb::from_bytes(db).map_err(value_err)?;
        let filter = EncryptedFilter::from_bytes(filter).map_err(value_err)?;
        Ok(Inspector(engine::Inspector::new(db, filter)))
    }

    fn db_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.db().to_bytes())
    }

    fn filter_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.filter().to_bytes())
    }

    #[getter]
    fn db_entries(&self) -> usize {
        self.0.db().len()
    }

    #[getter]
    fn filter_entries(&self) -> usize {
        self.0.filter().entry_count()
    }

    #[pyo3(signature = (packet, use_filter = true))]
    fn inspect(&self, py: Python<'_>, packet: &EncryptedPacket, use_filter: bool) -> Verdict {
        let mode = if use_filter { ScanMode::Filtered } else { ScanMode::FullScan };
        py.detach(|| self.0.inspect_counted(&packet.0, mode).0).into()
    }
}

/// Masks of `byte` at 1-based `position` under `key` (five bytes).
#[pyfunction]
fn prf<'py>(py: Python<'py>, key: &MasterKey, byte: u8, position: usize) -> PyResult<Bound<'py, PyBytes>> {
    let m = crypto::prf_eval(&key.0, byte, position).map_err(value_err)?;
    Ok(PyBytes::new(py, m.as_bytes()))
}

#[pyfunction]
fn kdf<'py>(py: Python<'py>, k5: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
    let k: [u8; crypto::MASK_LEN] = k5
        .try_into()
        .map_err(|_| PyValueError::new_err(format!("expected {} bytes", crypto::MASK_LEN)))?;
    Ok(PyBytes::new(py, &crypto::kdf(&crypto::ByteMask(k))))
}

/// Plaintext reference matches as `(rule_id, position, action)` tuples.
#[pyfunction]
fn plain_match(rules: &str, payload: &[u8]) -> PyResult<Vec<(u32, usize, String)>> {
    let rules = parse_ruleset(rules).map_err(value_err)?;
    Ok(shvebox_core::oracle::plain_match(&rules, payload)
        .into_iter()
        .map(|m| (m.rule_id, m.position, m.action.as_str().to_string()))
        .collect())
}

#[pymodule]
fn shvebox(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<MasterKey>()?;
    m.add_class::<EncryptedPacket>()?;
    m.add_class::<Gateway>()?;
    m.add_class::<Verdict>()?;
    m.add_class::<Inspector>()?;
    m.add_function(wrap_pyfunction!(prf, m)?)?;
    m.add_function(wrap_pyfunction!(kdf, m)?)?;
    m.add_function(wrap_pyfunction!(plain_match, m)?)?;
    m.add("MAX_PAYLOAD", crypto::MAX_PAYLOAD)?;
    Ok(())
}
