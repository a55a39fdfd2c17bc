//! Python bindings for the dyadic auction engine.

use std::sync::Arc;

use divauction::auction::{run_round as engine_round, BidVector, BuyerPolicy, ReserveVector};
use divauction::buyers::{self, DpBuyer, EnvelopeBuyer, TruthfulBuyer};
use divauction::harness::config::BuyerMode;
use divauction::pricing_tree::RppaAlgorithm;
use divauction::{div_engine, prrfes, regret, Error};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Internal(_) => PyRuntimeError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Exact `mantissa * 2^exponent`.
#[pyclass(name = "Dyadic", module = "divauction_py", frozen)]
#[derive(Clone)]
struct PyDyadic(divauction::Dyadic);

#[derive(FromPyObject)]
enum DyadicLike {
    Value(PyDyadic),
    Int(i64),
    Text(String),
}

impl DyadicLike {
    fn into_dyadic(self) -> PyResult<divauction::Dyadic> {
        match self {
            DyadicLike::Value(d) => Ok(d.0),
            DyadicLike::Int(n) => Ok(divauction::Dyadic::from_int(n)),
            DyadicLike::Text(s) => s.parse().map_err(py_err),
        }
    }
}

fn dyadics(xs: Vec<DyadicLike>) -> PyResult<Vec<divauction::Dyadic>> {
    xs.into_iter().map(DyadicLike::into_dyadic).collect()
}

#[pymethods]
impl PyDyadic {
    /// Exact parse of a binary-representable decimal; pass `frac_bits` to
    /// round any decimal to the nearest multiple of `2^-frac_bits`.
    #[new]
    #[pyo3(signature = (text, frac_bits=None))]
    fn new(text: &str, frac_bits: Option<u32>) -> PyResult<Self> {
        let d = match frac_bits {
            Some(bits) => divauction::Dyadic::from_decimal(text, bits),
            None => text.parse(),
        };
        d.map(PyDyadic).map_err(py_err)
    }

    #[staticmethod]
    fn from_parts(mantissa: i64, exponent: i64) -> Self {
        PyDyadic(divauction::Dyadic::from_i64(mantissa, exponent))
    }

    #[getter]
    fn mantissa(&self, py: Python<'_>) -> PyObject {
        self.0.mantissa().into_py(py)
    }

    #[getter]
    fn exponent(&self) -> i64 {
        self.0.exponent()
    }

    fn fraction(&self) -> String {
        self.0.to_fraction_string()
    }

    fn __float__(&self) -> f64 {
        self.0.to_f64()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Dyadic('{}')", self.0)
    }

    fn __hash__(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.0.hash(&mut h);
        h.finish()
    }

    fn __richcmp__(&self, other: DyadicLike, op: pyo3::basic::CompareOp) -> PyResult<bool> {
        Ok(op.matches(self.0.cmp(&other.into_dyadic()?)))
    }

    fn __add__(&self, other: DyadicLike) -> PyResult<Self> {
        Ok(PyDyadic(&self.0 + &other.into_dyadic()?))
    }

    fn __radd__(&self, other: DyadicLike) -> PyResult<Self> {
        self.__add__(other)
    }

    fn __sub__(&self, other: DyadicLike) -> PyResult<Self> {
        Ok(PyDyadic(&self.0 - &other.into_dyadic()?))
    }

    fn __rsub__(&self, other: DyadicLike) -> PyResult<Self> {
        Ok(PyDyadic(&other.into_dyadic()? - &self.0))
    }

    fn __mul__(&self, other: DyadicLike) -> PyResult<Self> {
        Ok(PyDyadic(&self.0 * &other.into_dyadic()?))
    }

    fn __rmul__(&self, other: DyadicLike) -> PyResult<Self> {
        self.__mul__(other)
    }

    fn __neg__(&self) -> Self {
        PyDyadic(-&self.0)
    }
}

/// One second-price round with personal reserves.
#[pyfunction]
#[pyo3(signature = (reserves, bids, seed=0))]
fn run_round(py: Python<'_>, reserves: Vec<DyadicLike>, bids: Vec<DyadicLike>, seed: u64) -> PyResult<PyObject> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let out = engine_round(&ReserveVector(dyadics(reserves)?), &BidVector(dyadics(bids)?), &mut rng).map_err(py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("participants", out.participants)?;
    d.set_item("winner", out.winner)?;
    d.set_item("payment", Py::new(py, PyDyadic(out.payment))?)?;
    d.set_item("allocations", out.allocations)?;
    d.set_item("participation", out.participation)?;
    Ok(d.into())
}

/// The single-buyer phase-search state machine with reinforced penalization.
#[pyclass(name = "PrrfesState", module = "divauction_py")]
#[derive(Clone)]
struct PyPrrfes(prrfes::PrrfesState);

#[pymethods]
impl PyPrrfes {
    #[new]
    fn new(r: u32) -> PyResult<Self> {
        if r == 0 {
            return Err(PyValueError::new_err("penalization length must be at least 1"));
        }
        Ok(PyPrrfes(prrfes::PrrfesState::new(r)))
    }

    fn price(&self) -> PyDyadic {
        PyDyadic(self.0.price())
    }

    fn step(&mut self, accepted: bool) {
        self.0.step(accepted);
    }

    #[getter]
    fn phase(&self) -> u32 {
        self.0.phase()
    }

    #[getter]
    fn q(&self) -> PyDyadic {
        PyDyadic(self.0.q().clone())
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.0.mode().as_str()
    }

    #[getter]
    fn k(&self) -> u64 {
        self.0.k()
    }

    fn __repr__(&self) -> String {
        format!("PrrfesState({})", self.0)
    }
}

/// Regret split of one dividing game.
#[pyclass(name = "RegretReport", module = "divauction_py", frozen, get_all)]
struct PyReport {
    horizon: u64,
    seed: u64,
    r: u32,
    v_bar: PyDyadic,
    total: PyDyadic,
    individual: Vec<PyDyadic>,
    deviation: PyDyadic,
    subhorizons: Vec<u64>,
    bound_theorem1: f64,
    bound_lemma2: Vec<Option<f64>>,
    bound_lemma3: Vec<Option<f64>>,
    failures: Vec<String>,
    identity_holds: bool,
    revenue: PyDyadic,
    trace_csv: String,
    events_csv: String,
}

#[pymethods]
impl PyReport {
    fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn __repr__(&self) -> String {
        format!(
            "RegretReport(T={}, total={}, subhorizons={:?}, bound={:.3}, failures={})",
            self.horizon,
            self.total.0,
            self.subhorizons,
            self.bound_theorem1,
            self.failures.len()
        )
    }
}

/// Plays the dividing phase-search seller against `len(valuations)` buyers.
///
/// `modes` is one mode for everyone or one per buyer: `truthful`,
/// `envelope_always_accept`, `envelope_always_reject`, `envelope_coin:p`
/// or `dp_optimal`.
#[pyfunction]
#[pyo3(signature = (valuations, horizon, gamma0=0.5, modes=vec!["envelope_always_reject".to_string()], seed=0, r=None, gammas=None))]
fn play_divprrfes(
    valuations: Vec<DyadicLike>,
    horizon: u64,
    gamma0: f64,
    modes: Vec<String>,
    seed: u64,
    r: Option<u32>,
    gammas: Option<Vec<f64>>,
) -> PyResult<PyReport> {
    let vals = dyadics(valuations)?;
    let m = vals.len();
    let modes: Vec<BuyerMode> = modes.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(py_err)?;
    let modes = match modes.len() {
        1 => vec![modes[0]; m],
        n if n == m => modes,
        n => return Err(PyValueError::new_err(format!("{n} modes for {m} buyers"))),
    };
    let gammas = gammas.unwrap_or_else(|| vec![gamma0; m]);
    if gammas.len() != m {
        return Err(PyValueError::new_err(format!("{} discounts for {m} buyers", gammas.len())));
    }
    let mut seller = div_engine::divprrfes(m, gamma0, r).map_err(py_err)?;
    let r = seller.substates()[0].r();
    let p_bar = seller.p_bar().clone();
    let mut policies: Vec<Box<dyn BuyerPolicy>> = Vec::with_capacity(m);
    for ((v, mode), gamma) in vals.iter().zip(&modes).zip(&gammas) {
        let b: Box<dyn BuyerPolicy> = match *mode {
            BuyerMode::Truthful => Box::new(TruthfulBuyer::new(v.clone())),
            BuyerMode::Envelope(fc) => {
                Box::new(EnvelopeBuyer::new(v.clone(), *gamma, r, p_bar.clone(), fc).map_err(py_err)?)
            }
            BuyerMode::DpOptimal => {
                let t = u32::try_from(horizon).map_err(|_| PyValueError::new_err("horizon too large for dp_optimal"))?;
                let policy = buyers::dp_optimal(&prrfes::PrrfesState::new(r), v, *gamma, t).map_err(py_err)?;
                Box::new(DpBuyer::new(Arc::new(policy)))
            }
        };
        policies.push(b);
    }
    let trace = divauction::play_game(&mut seller, &mut policies, horizon, seed).map_err(py_err)?;
    let report = divauction::decompose(&trace, &vals, r).map_err(py_err)?;
    let mut trace_csv = Vec::new();
    trace.write_csv(&mut trace_csv).map_err(|e| py_err(e.into()))?;
    let mut events_csv = Vec::new();
    trace.write_events_csv(&mut events_csv).map_err(|e| py_err(e.into()))?;
    Ok(PyReport {
        horizon: report.horizon,
        seed: report.seed,
        r: report.r,
        v_bar: PyDyadic(report.v_bar.clone()),
        total: PyDyadic(report.total.clone()),
        individual: report.individual.iter().cloned().map(PyDyadic).collect(),
        deviation: PyDyadic(report.deviation.clone()),
        subhorizons: report.subhorizons.clone(),
        bound_theorem1: report.bound_theorem1,
        bound_lemma2: report.bound_lemma2.clone(),
        bound_lemma3: report.bound_lemma3.clone(),
        failures: report.failures(),
        identity_holds: report.identity_holds,
        revenue: PyDyadic(divauction::auction::revenue(&trace)),
        trace_csv: String::from_utf8(trace_csv).expect("ascii csv"),
        events_csv: String::from_utf8(events_csv).expect("ascii csv"),
    })
}

/// `2^{-2^l}`.
#[pyfunction]
fn epsilon(l: u32) -> PyResult<PyDyadic> {
    prrfes::phase_params(l).map(|p| PyDyadic(p.epsilon)).map_err(py_err)
}

#[pyfunction]
fn r_gamma(gamma: f64) -> PyResult<u32> {
    prrfes::r_gamma(gamma).map_err(py_err)
}

#[pyfunction]
fn zeta(r: u32, gamma: f64) -> PyResult<f64> {
    prrfes::zeta(r, gamma).map_err(py_err)
}

#[pyfunction]
fn barrage_price(gamma0: f64) -> PyResult<PyDyadic> {
    div_engine::barrage_price(gamma0).map(PyDyadic).map_err(py_err)
}

#[pyfunction]
fn theorem1_bound(m: usize, r: u32, v_bar: f64, horizon: u64) -> PyResult<f64> {
    regret::theorem1_bound(m, r, v_bar, horizon).map_err(py_err)
}

#[pyfunction]
fn lemma2_bound(r: u32, v: f64, subhorizon: u64) -> PyResult<f64> {
    regret::lemma2_bound(r, v, subhorizon).map_err(py_err)
}

#[pyfunction]
fn lemma3_bound(r: u32, v_bar: f64, v: f64) -> PyResult<f64> {
    regret::lemma3_bound(r, v_bar, v).map_err(py_err)
}

/// Backward induction for one buyer against the phase-search seller.
/// Returns `(optimal value, optimal decision path, location breaches)`.
#[pyfunction]
#[pyo3(signature = (v, gamma, horizon, r=None))]
fn dp_optimal(v: DyadicLike, gamma: f64, horizon: u32, r: Option<u32>) -> PyResult<(f64, Vec<bool>, usize)> {
    let v = v.into_dyadic()?;
    let r = match r {
        Some(r) => r,
        None => prrfes::r_gamma(gamma).map_err(py_err)?,
    };
    let root = prrfes::PrrfesState::new(r);
    let policy = buyers::dp_optimal(&root, &v, gamma, horizon).map_err(py_err)?;
    let z = prrfes::zeta(r, gamma).map_err(py_err)?;
    let breaches = buyers::prop1_breaches(&policy, &root, &v, z).len();
    Ok((policy.root_value(), policy.optimal_path(), breaches))
}

#[pymodule]
fn divauction_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDyadic>()?;
    m.add_class::<PyPrrfes>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(run_round, m)?)?;
    m.add_function(wrap_pyfunction!(play_divprrfes, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(r_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(zeta, m)?)?;
    m.add_function(wrap_pyfunction!(barrage_price, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1_bound, m)?)?;
    m.add_function(wrap_pyfunction!(lemma2_bound, m)?)?;
    m.add_function(wrap_pyfunction!(lemma3_bound, m)?)?;
    m.add_function(wrap_pyfunction!(dp_optimal, m)?)?;
    Ok(())
}
