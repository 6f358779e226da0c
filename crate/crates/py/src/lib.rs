//! Python bindings. Series are passed as lists of time rows (T × N) and
//! networks as 0/1 adjacency matrices; the five-node example network is used
//! when none is given.

use ::countnet::design::{CountSeries, ModelOrder};
use ::countnet::fit::{FitResult, Method, ModelKind};
use ::countnet::harness::models::{default_method, fit_model, forecast as forecast_fit};
use ::countnet::network::Network;
use ::countnet::ngnar::{NgnarFitOptions, NgnarModel};
use ::countnet::{baselines::PnarModel, dists, gnari::GnariModel};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_py(e: ::countnet::error::Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn network(adjacency: Option<Vec<Vec<u8>>>) -> ::countnet::error::Result<Network> {
    match adjacency {
        Some(a) => Network::from_adjacency(a),
        None => Ok(Network::five_node()),
    }
}

fn parse<T: std::str::FromStr<Err = ::countnet::error::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn time_rows(series: &CountSeries) -> Vec<Vec<u64>> {
    (0..series.len()).map(|t| series.column(t)).collect()
}

/// Simulates `length` steps. `beta[k]` holds the stage coefficients of lag
/// `k + 1`; `intensity` is λ (GNARI), α₀ (NGNAR) or β₀ (PNAR, which takes a
/// single alpha and beta).
#[allow(clippy::too_many_arguments)]
pub fn simulate_rows(
    model: &str,
    alpha: &[f64],
    beta: &[Vec<f64>],
    intensity: f64,
    length: usize,
    seed: u64,
    burn_in: usize,
    adjacency: Option<Vec<Vec<u8>>>,
    response: &str,
) -> PyResult<Vec<Vec<u64>>> {
    let net = network(adjacency).map_err(to_py)?;
    let kind: ModelKind = parse(model)?;
    let stages: Vec<usize> = beta.iter().map(Vec::len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series = match kind {
        ModelKind::Gnari | ModelKind::Gnar => GnariModel::global(net, stages, alpha, beta, intensity)
            .and_then(|m| m.simulate(length, burn_in, &mut rng)),
        ModelKind::Ngnar => NgnarModel::global(net, stages, alpha, beta, intensity, parse(response)?)
            .and_then(|m| m.simulate(length, burn_in, &mut rng)),
        ModelKind::Pnar => {
            if alpha.len() != 1 || beta.len() != 1 || beta[0].len() != 1 {
                return Err(PyValueError::new_err("PNAR takes one alpha and one beta"));
            }
            PnarModel::new(net, intensity, alpha[0], beta[0][0]).and_then(|m| m.simulate(length, burn_in, &mut rng))
        }
    }
    .map_err(to_py)?;
    Ok(time_rows(&series))
}

pub fn fit_json(
    model: &str,
    series: &[Vec<u64>],
    adjacency: Option<Vec<Vec<u8>>>,
    method: Option<&str>,
    stages: Vec<usize>,
    local_intercept: bool,
    response: &str,
    seed: u64,
) -> PyResult<String> {
    let net = network(adjacency).map_err(to_py)?;
    let kind: ModelKind = parse(model)?;
    let method: Method = match method {
        Some(m) => parse(m)?,
        None => default_method(kind),
    };
    let s = CountSeries::from_time_rows(series, net.node_count()).map_err(to_py)?;
    let order = ModelOrder::new(stages).local_intercept(local_intercept);
    let options = NgnarFitOptions {
        seed,
        ..Default::default()
    };
    let fit = fit_model(kind, method, &s, &net, &order, parse(response)?, &options).map_err(to_py)?;
    fit.to_json().map_err(to_py)
}

pub fn forecast_rows(
    fit: &str,
    series: &[Vec<u64>],
    horizon: usize,
    adjacency: Option<Vec<Vec<u8>>>,
) -> PyResult<Vec<Vec<f64>>> {
    let net = network(adjacency).map_err(to_py)?;
    let fit = FitResult::from_json(fit, net.node_ids()).map_err(to_py)?;
    let s = CountSeries::from_time_rows(series, net.node_count()).map_err(to_py)?;
    let f = forecast_fit(&fit, &net, &s, horizon).map_err(to_py)?;
    Ok((0..f.ncols()).map(|h| f.column(h).iter().copied().collect()).collect())
}

#[pyfunction]
#[pyo3(signature = (model, alpha, beta, intensity, length, seed=0, burn_in=200, adjacency=None, response="softplus"))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    model: &str,
    alpha: Vec<f64>,
    beta: Vec<Vec<f64>>,
    intensity: f64,
    length: usize,
    seed: u64,
    burn_in: usize,
    adjacency: Option<Vec<Vec<u8>>>,
    response: &str,
) -> PyResult<Vec<Vec<u64>>> {
    simulate_rows(model, &alpha, &beta, intensity, length, seed, burn_in, adjacency, response)
}

/// Returns the fit as a JSON document (the same format the CLI writes).
#[pyfunction]
#[pyo3(signature = (model, series, adjacency=None, method=None, stages=vec![1], local_intercept=false, response="softplus", seed=0))]
#[allow(clippy::too_many_arguments)]
fn fit(
    model: &str,
    series: Vec<Vec<u64>>,
    adjacency: Option<Vec<Vec<u8>>>,
    method: Option<&str>,
    stages: Vec<usize>,
    local_intercept: bool,
    response: &str,
    seed: u64,
) -> PyResult<String> {
    fit_json(model, &series, adjacency, method, stages, local_intercept, response, seed)
}

/// Mean forecasts as `horizon` rows of N values.
#[pyfunction]
#[pyo3(signature = (fit, series, horizon, adjacency=None))]
fn forecast(fit: &str, series: Vec<Vec<u64>>, horizon: usize, adjacency: Option<Vec<Vec<u8>>>) -> PyResult<Vec<Vec<f64>>> {
    forecast_rows(fit, &series, horizon, adjacency)
}

#[pyfunction]
fn poisson_binomial_pmf(probs: Vec<f64>) -> PyResult<Vec<f64>> {
    dists::poisson_binomial_pmf(&probs).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "countnet")]
fn countnet_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(forecast, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_binomial_pmf, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
