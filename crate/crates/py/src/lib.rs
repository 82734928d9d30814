//! Python bindings: chunks and stores, the MPHF, storage proofs, the wire
//! codec and the network simulator.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use snips::chunkstore as cs;
use snips::mphf::{self, DEFAULT_GAMMA};
use snips::netsim::{self, Protocol, Scenario, ScenarioConfig};
use snips::proof::{self, ChunkProofCache, ReverseMap};
use snips::protocol::Message;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn digest(b: &[u8], what: &str) -> PyResult<[u8; 32]> {
    b.try_into().map_err(|_| PyValueError::new_err(format!("{what} must be 32 bytes, got {}", b.len())))
}

fn nonce(b: &[u8]) -> PyResult<proof::Nonce> {
    b.try_into().map_err(|_| PyValueError::new_err(format!("nonce must be 8 bytes, got {}", b.len())))
}

/// Content-addressed chunk of 1 to 4096 bytes.
#[pyclass(module = "snips_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Chunk(cs::Chunk);

#[pymethods]
impl Chunk {
    #[new]
    fn new(data: Vec<u8>) -> PyResult<Self> {
        cs::Chunk::new(data).map(Chunk).map_err(value_error)
    }

    #[getter]
    fn id<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.id().0)
    }

    #[getter]
    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.data())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Chunk(id={}, len={})", self.0.id().short(), self.0.len())
    }
}

/// Chunks ordered by id.
#[pyclass(module = "snips_py", skip_from_py_object)]
#[derive(Clone, Default)]
struct ChunkStore(cs::ChunkStore);

#[pymethods]
impl ChunkStore {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    /// Inserts raw bytes as a chunk; returns its id.
    fn put<'py>(&mut self, py: Python<'py>, data: Vec<u8>) -> PyResult<Bound<'py, PyBytes>> {
        let c = cs::Chunk::new(data).map_err(value_error)?;
        let id = c.id();
        self.0.put(c);
        Ok(PyBytes::new(py, &id.0))
    }

    fn get(&self, id: &[u8]) -> PyResult<Option<Chunk>> {
        Ok(self.0.get(&cs::Address(digest(id, "id")?)).cloned().map(Chunk))
    }

    fn delete(&mut self, id: &[u8]) -> PyResult<bool> {
        Ok(self.0.delete(&cs::Address(digest(id, "id")?)).is_some())
    }

    fn __contains__(&self, id: &[u8]) -> PyResult<bool> {
        Ok(self.0.contains(&cs::Address(digest(id, "id")?)))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Chunk ids in ascending order.
    fn ids<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyBytes>> {
        self.0.ids().map(|id| PyBytes::new(py, &id.0)).collect()
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.0.save(path).map_err(value_error)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        cs::ChunkStore::load(path).map(ChunkStore).map_err(value_error)
    }
}

/// Minimal perfect hash over 32-byte keys; `find` returns 1..=n for members
/// and an arbitrary value, often 0, otherwise.
#[pyclass(module = "snips_py", frozen)]
struct Mphf(mphf::Mphf);

#[pymethods]
impl Mphf {
    #[staticmethod]
    #[pyo3(signature = (keys, gamma = DEFAULT_GAMMA))]
    fn build(keys: Vec<Vec<u8>>, gamma: f64) -> PyResult<Self> {
        let keys = keys.iter().map(|k| digest(k, "key")).collect::<PyResult<Vec<_>>>()?;
        mphf::Mphf::build(&keys, gamma).map(Mphf).map_err(value_error)
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        mphf::Mphf::from_bytes(data).map(Mphf).map_err(value_error)
    }

    fn find(&self, key: &[u8]) -> PyResult<u64> {
        Ok(self.0.find(&digest(key, "key")?))
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.to_bytes())
    }

    fn size_bits(&self) -> u64 {
        self.0.size_bits()
    }

    fn __len__(&self) -> usize {
        self.0.len() as usize
    }
}

/// Ed25519 signing identity; the address is the public key.
#[pyclass(module = "snips_py", frozen)]
struct Identity(proof::Identity);

#[pymethods]
impl Identity {
    #[new]
    fn new(seed: u64) -> Self {
        Identity(proof::Identity::from_seed(seed))
    }

    #[getter]
    fn address<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.address().0)
    }
}

/// Signed storage proof together with the prover-side index to id map.
#[pyclass(module = "snips_py", frozen)]
struct StorageProof {
    proof: proof::StorageProof,
    reverse: Option<ReverseMap>,
}

#[pymethods]
impl StorageProof {
    /// Proof over every chunk in `store`.
    #[staticmethod]
    #[pyo3(signature = (store, nonce, identity, gamma = DEFAULT_GAMMA))]
    fn create(store: &ChunkStore, nonce: &[u8], identity: &Identity, gamma: f64) -> PyResult<Self> {
        let (proof, reverse) = proof::create_proof(
            &store.0,
            self::nonce(nonce)?,
            cs::Address::ZERO,
            cs::Address::MAX,
            &mut ChunkProofCache::new(),
            &identity.0,
            gamma,
        )
        .map_err(value_error)?;
        Ok(StorageProof { proof, reverse: Some(reverse) })
    }

    /// Decodes a Prove message.
    #[staticmethod]
    fn decode(data: Vec<u8>) -> PyResult<Self> {
        match Message::decode(&bytes::Bytes::from(data)).map_err(value_error)? {
            Message::Prove(proof) => Ok(StorageProof { proof, reverse: None }),
            other => Err(PyValueError::new_err(format!("expected a Prove message, got {}", other.kind().name()))),
        }
    }

    /// Encodes as a Prove message.
    fn encode<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &Message::Prove(self.proof.clone()).encode())
    }

    /// Signer address if the signature is valid.
    fn verify_signature<'py>(&self, py: Python<'py>) -> Option<Bound<'py, PyBytes>> {
        self.proof.verify_signature().map(|a| PyBytes::new(py, &a.0))
    }

    /// Id of the chunk at `index`; only known on the prover side.
    fn chunk_at<'py>(&self, py: Python<'py>, index: u64) -> Option<Bound<'py, PyBytes>> {
        self.reverse.as_ref()?.get(index).map(|id| PyBytes::new(py, &id.0))
    }

    /// Evaluates the proof against `store`: missing indices, collision flag
    /// and hit count.
    fn find_missing<'py>(&self, py: Python<'py>, store: &ChunkStore) -> PyResult<Bound<'py, PyDict>> {
        let r = proof::find_missing(&store.0, &self.proof, &mut ChunkProofCache::new());
        let d = PyDict::new(py);
        d.set_item("missing", r.missing)?;
        d.set_item("collision", r.collision)?;
        d.set_item("hits", r.hits)?;
        Ok(d)
    }

    #[getter]
    fn nonce<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.proof.nonce())
    }

    fn __len__(&self) -> usize {
        self.proof.len() as usize
    }
}

/// Runs one simulated scenario and returns the metrics report as a dict.
#[pyfunction]
#[pyo3(signature = (scenario, peers = 2, size_mb = 10.0, chunk_size = cs::MAX_CHUNK_SIZE, seed = 1, baseline = false, max_rounds = 10))]
fn simulate<'py>(
    py: Python<'py>,
    scenario: &str,
    peers: usize,
    size_mb: f64,
    chunk_size: usize,
    seed: u64,
    baseline: bool,
    max_rounds: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let config = ScenarioConfig {
        protocol: if baseline { Protocol::Baseline } else { Protocol::Snips },
        peers,
        total_storage_bytes: (size_mb * netsim::MIB as f64) as u64,
        chunk_size,
        scenario: Scenario::parse(scenario).map_err(PyValueError::new_err)?,
        seed,
        max_rounds,
        ..Default::default()
    };
    config.validate().map_err(PyValueError::new_err)?;
    let r = py.detach(|| netsim::run(&config));
    let d = PyDict::new(py);
    d.set_item("protocol", &r.protocol)?;
    d.set_item("scenario", &r.scenario)?;
    d.set_item("converged", r.converged)?;
    d.set_item("rounds_to_sync", r.rounds_to_sync)?;
    d.set_item("metadata_bytes", r.metadata_bytes)?;
    d.set_item("sync_metadata_bytes", r.sync_metadata_bytes)?;
    d.set_item("chunk_payload_bytes", r.chunk_payload_bytes)?;
    d.set_item("select_messages", r.select_messages)?;
    d.set_item("max_selects_per_peer", r.max_selects_per_peer)?;
    d.set_item("proof_accuracy_per_round", r.proof_accuracy_per_round)?;
    d.set_item("bits_per_chunk", r.bits_per_chunk)?;
    Ok(d)
}

/// Probability that probing `n` proven chunks with `probe_count` foreign
/// chunks yields at least one nonzero index.
#[pyfunction]
#[pyo3(signature = (n, probe_count, trials = 100, seed = 1))]
fn false_positive_rate(py: Python<'_>, n: usize, probe_count: usize, trials: u64, seed: u64) -> f64 {
    py.detach(|| netsim::simulate_false_positive(n, probe_count, trials, seed).probability)
}

/// Fraction of one-chunk-differing trials that look consistent.
#[pyfunction]
#[pyo3(signature = (n, trials = 10_000, seed = 1))]
fn false_consistency_rate(py: Python<'_>, n: usize, trials: u64, seed: u64) -> PyResult<f64> {
    if n == 0 {
        return Err(PyValueError::new_err("n must be positive"));
    }
    Ok(py.detach(|| netsim::simulate_false_consistency(n, trials, seed).estimate))
}

#[pymodule]
fn snips_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Chunk>()?;
    m.add_class::<ChunkStore>()?;
    m.add_class::<Mphf>()?;
    m.add_class::<Identity>()?;
    m.add_class::<StorageProof>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(false_positive_rate, m)?)?;
    m.add_function(wrap_pyfunction!(false_consistency_rate, m)?)?;
    Ok(())
}
