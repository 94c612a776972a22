use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use optbench::feed::{self, Arrivals, MarketTick, SyntheticSpec, TickTrace};
use optbench::metrics::{self, SessionReport};
use optbench::pricer::{self, ContractBook, SessionLog, SessionMeta, VirtualCost};
use optbench::pricing::{self, OptionContract, OptionKind, PricingParams, Screening, SpotPrice};
use optbench::vector::{self, KernelVariant, LaneWidth, Precision};
use optbench::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::File { .. } | Error::SourceUnavailable(_) => PyOSError::new_err(e.to_string()),
        Error::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn contract(kind: &str, strike: f64, expiry: f64) -> PyResult<OptionContract> {
    let kind: OptionKind = kind.parse().map_err(to_py)?;
    OptionContract::new("py", kind, strike, expiry).map_err(to_py)
}

fn inputs(spot: f64, rate: f64, volatility: f64) -> PyResult<(SpotPrice, PricingParams)> {
    Ok((
        SpotPrice::new(spot).map_err(to_py)?,
        PricingParams::new(rate, volatility).map_err(to_py)?,
    ))
}

/// Closed-form European price. `kind` is "call" or "put".
#[pyfunction]
#[pyo3(signature = (kind, spot, strike, expiry, rate, volatility))]
fn black_scholes(kind: &str, spot: f64, strike: f64, expiry: f64, rate: f64, volatility: f64) -> PyResult<f64> {
    let c = contract(kind, strike, expiry)?;
    let (s, p) = inputs(spot, rate, volatility)?;
    pricing::black_scholes_price(&c, s, &p).map_err(to_py)
}

/// Monte Carlo price. With a `variant` other than NOVECT the lane kernel runs.
#[pyfunction]
#[pyo3(signature = (kind, spot, strike, expiry, rate, volatility, draws, seed=5489, screening=true, variant="NOVECT", precision=64))]
#[allow(clippy::too_many_arguments)]
fn mc_price(
    kind: &str,
    spot: f64,
    strike: f64,
    expiry: f64,
    rate: f64,
    volatility: f64,
    draws: usize,
    seed: u64,
    screening: bool,
    variant: &str,
    precision: u32,
) -> PyResult<f64> {
    let c = contract(kind, strike, expiry)?;
    let (s, p) = inputs(spot, rate, volatility)?;
    let opts = pricing::McOptions {
        draws,
        seed,
        screening: if screening { Screening::On } else { Screening::Off },
    };
    let variant: KernelVariant = variant.parse().map_err(to_py)?;
    let precision: Precision = precision.to_string().parse().map_err(to_py)?;
    let price = if variant.is_reference() && precision == Precision::Double {
        pricing::mc_price_with(&c, s, &p, &opts, &mut || false)
    } else {
        vector::mc_price_lanes(&c, s, &p, &opts, variant.lane_config(precision), &mut || false)
    };
    Ok(price.map_err(to_py)?.expect("never cancelled"))
}

/// Binomial lattice price with `steps` levels.
#[pyfunction]
#[pyo3(signature = (kind, spot, strike, expiry, rate, volatility, steps, variant="NOVECT", precision=64))]
#[allow(clippy::too_many_arguments)]
fn bt_price(
    kind: &str,
    spot: f64,
    strike: f64,
    expiry: f64,
    rate: f64,
    volatility: f64,
    steps: usize,
    variant: &str,
    precision: u32,
) -> PyResult<f64> {
    let c = contract(kind, strike, expiry)?;
    let (s, p) = inputs(spot, rate, volatility)?;
    let variant: KernelVariant = variant.parse().map_err(to_py)?;
    let precision: Precision = precision.to_string().parse().map_err(to_py)?;
    let price = if variant.is_reference() && precision == Precision::Double {
        pricing::bt_price_with(&c, s, &p, steps, &mut || false)
    } else {
        vector::bt_price_lanes(&c, s, &p, steps, variant.lane_config(precision), &mut || false)
    };
    Ok(price.map_err(to_py)?.expect("never cancelled"))
}

fn width(lanes: usize) -> PyResult<LaneWidth> {
    LaneWidth::ALL
        .into_iter()
        .find(|w| w.lanes() == lanes)
        .ok_or_else(|| PyValueError::new_err(format!("unsupported lane width {lanes}")))
}

/// Lane-wise exp. Returns the values and the status flag bits.
#[pyfunction]
#[pyo3(signature = (values, lanes=8, precision=64))]
fn vexp(values: Vec<f64>, lanes: usize, precision: u32) -> PyResult<(Vec<f64>, u8)> {
    let w = width(lanes)?;
    match precision {
        64 => {
            let (out, st) = vector::vexp(&values, w);
            Ok((out, st.bits()))
        }
        32 => {
            let narrow: Vec<f32> = values.iter().map(|&v| v as f32).collect();
            let (out, st) = vector::vexp(&narrow, w);
            Ok((out.into_iter().map(f64::from).collect(), st.bits()))
        }
        _ => Err(PyValueError::new_err(format!("precision must be 32 or 64, got {precision}"))),
    }
}

/// 32-bit Mersenne Twister.
#[pyclass(name = "Mt19937")]
struct PyMt19937 {
    inner: pricing::Mt19937,
}

#[pymethods]
impl PyMt19937 {
    #[new]
    #[pyo3(signature = (seed=5489))]
    fn new(seed: u32) -> Self {
        PyMt19937 {
            inner: pricing::Mt19937::new(seed),
        }
    }

    #[staticmethod]
    fn from_key(key: Vec<u32>) -> Self {
        PyMt19937 {
            inner: pricing::Mt19937::from_key(&key),
        }
    }

    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn take(&mut self, n: usize) -> Vec<u32> {
        (0..n).map(|_| self.inner.next_u32()).collect()
    }
}

/// Standard normals from the Box-Muller stream used by the Monte Carlo kernel.
#[pyfunction]
fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut s = pricing::NormalStream::new(seed);
    let mut out = vec![0.0; n];
    s.fill(&mut out);
    out
}

#[pyclass(name = "MarketTick", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyTick {
    seq: u32,
    timestamp_ns: u64,
    symbol: String,
    price: f64,
}

#[pymethods]
impl PyTick {
    fn __repr__(&self) -> String {
        format!("MarketTick(seq={}, timestamp_ns={}, symbol={:?}, price={})", self.seq, self.timestamp_ns, self.symbol, self.price)
    }
}

impl From<&MarketTick> for PyTick {
    fn from(t: &MarketTick) -> Self {
        PyTick {
            seq: t.seq,
            timestamp_ns: t.timestamp_ns,
            symbol: t.symbol.clone(),
            price: t.price,
        }
    }
}

/// A recorded tick stream.
#[pyclass(name = "TickTrace")]
struct PyTrace {
    inner: TickTrace,
}

#[pymethods]
impl PyTrace {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyTrace {
            inner: TickTrace::load(path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyTrace {
            inner: TickTrace::read_from(text.as_bytes()).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn ticks(&self) -> Vec<PyTick> {
        self.inner.ticks().iter().map(PyTick::from).collect()
    }

    fn gaps_ns(&self) -> Vec<u64> {
        self.inner.gaps_ns()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Synthetic trace; `arrivals` is "fixed" or "poisson".
#[pyfunction]
#[pyo3(signature = (count, rate, arrivals="poisson", seed=5489, symbol="FB", start_price=25.0))]
fn generate_trace(count: usize, rate: f64, arrivals: &str, seed: u64, symbol: &str, start_price: f64) -> PyResult<PyTrace> {
    let arrivals: Arrivals = arrivals.parse().map_err(to_py)?;
    let spec = SyntheticSpec {
        arrivals,
        rate,
        count,
        seed,
        symbol: symbol.to_string(),
        start_price,
        ..SyntheticSpec::default()
    };
    Ok(PyTrace {
        inner: feed::generate_trace(&spec).map_err(to_py)?,
    })
}

/// Log of one pricing session.
#[pyclass(name = "SessionLog")]
struct PyLog {
    inner: SessionLog,
}

#[pymethods]
impl PyLog {
    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        Ok(PyLog {
            inner: SessionLog::load(dir).map_err(to_py)?,
        })
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        self.inner.save(dir).map_err(to_py)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    /// (success, abandoned, errored)
    fn counts(&self) -> (usize, usize, usize) {
        let c = self.inner.counts();
        (c.success, c.abandoned, c.errored)
    }

    fn qos(&self) -> Option<f64> {
        metrics::qos(&self.inner)
    }

    fn s_per_opt(&self) -> Option<f64> {
        metrics::time_per_option(&self.inner)
    }

    /// Report JSON for a session drawing `mean_power_w` on average.
    #[pyo3(signature = (mean_power_w, power_source="constant"))]
    fn report_json(&self, mean_power_w: f64, power_source: &str) -> PyResult<String> {
        SessionReport::build(&self.inner, mean_power_w, power_source)
            .to_json()
            .map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

/// Runs the pricer on a virtual clock over `trace` with a generated book.
#[pyfunction]
#[pyo3(signature = (trace, book_size, strike_lo, strike_hi, cost_ns, checkpoint_ns=0, workers=1, expiries=vec![0.25, 0.5, 1.0]))]
#[allow(clippy::too_many_arguments)]
fn run_virtual(
    trace: &PyTrace,
    book_size: usize,
    strike_lo: f64,
    strike_hi: f64,
    cost_ns: u64,
    checkpoint_ns: u64,
    workers: usize,
    expiries: Vec<f64>,
) -> PyResult<PyLog> {
    let book = ContractBook::generate(book_size, strike_lo, strike_hi, &expiries).map_err(to_py)?;
    let meta = SessionMeta {
        workers,
        mode: "virtual".into(),
        ..SessionMeta::default()
    };
    let log = pricer::run_virtual(
        trace.inner.ticks(),
        &book,
        VirtualCost {
            cost_ns,
            checkpoint_ns,
        },
        workers,
        &meta,
    )
    .map_err(to_py)?;
    Ok(PyLog { inner: log })
}

#[pyfunction]
fn joules_per_option(mean_power_w: f64, s_per_opt: f64) -> f64 {
    metrics::joules_per_option(mean_power_w, s_per_opt)
}

#[pymodule]
fn pyoptbench(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(black_scholes, m)?)?;
    m.add_function(wrap_pyfunction!(mc_price, m)?)?;
    m.add_function(wrap_pyfunction!(bt_price, m)?)?;
    m.add_function(wrap_pyfunction!(vexp, m)?)?;
    m.add_function(wrap_pyfunction!(normals, m)?)?;
    m.add_function(wrap_pyfunction!(generate_trace, m)?)?;
    m.add_function(wrap_pyfunction!(run_virtual, m)?)?;
    m.add_function(wrap_pyfunction!(joules_per_option, m)?)?;
    m.add_class::<PyMt19937>()?;
    m.add_class::<PyTick>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyLog>()?;
    Ok(())
}
