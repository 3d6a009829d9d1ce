//! Python bindings. Scalar helpers return floats; campaign reports come
//! back as JSON strings (`json.loads` them), matching the CLI manifests.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use srdelab::experiments::apriori::AprioriConstants;
use srdelab::experiments::config::Config;
use srdelab::gronwall::{log_gronwall_bound, GronwallData};
use srdelab::heat_kernel::{self as hk, KernelEstimateId, KernelParams};
use srdelab::noise::{sample_noise, StreamId};
use srdelab::solver::{solve, SolveConfig};
use srdelab::weighted_norms::{self, WeightParams};

fn py_err(e: srdelab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn config_from(text: Option<&str>, seed: Option<u64>) -> srdelab::Result<Config> {
    let mut cfg = match text {
        Some(t) => Config::parse(t)?,
        None => Config::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Times, node positions, frames (one row per time) and run status.
pub type SimulateOutput = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>, String);

pub fn simulate_inner(config: Option<&str>, seed: Option<u64>) -> srdelab::Result<SimulateOutput> {
    let cfg = config_from(config, seed)?;
    let g = cfg.grid()?;
    let coeffs = cfg.coefficients()?;
    let weights = WeightParams::new(cfg.weights.lambda, coeffs.c1)?;
    let (s, stream) = srdelab::noise::split_stream(cfg.seed, 0);
    let noise = sample_noise(g, s, stream);
    let sc = SolveConfig::new(std::sync::Arc::new(coeffs), weights, cfg.initial()?.sample(g)?, noise, cfg.monitor()?)?;
    let traj = solve(&sc);
    let ts = (0..traj.frames().len()).map(|k| g.t(k)).collect();
    let frames = traj.frames().iter().map(|f| f.values().to_vec()).collect();
    let status = serde_json::to_value(traj.status()).expect("status serializes")["status"]
        .as_str()
        .unwrap_or("completed")
        .to_string();
    Ok((ts, g.xs(), frames, status))
}

pub fn kernel_sides_inner(id: &str, t: f64, s: f64, x: f64, y: f64, eta: f64, theta: f64) -> srdelab::Result<(f64, f64)> {
    let id = KernelEstimateId::parse(id).ok_or_else(|| srdelab::Error::InvalidArgument(format!("unknown estimate id {id}")))?;
    hk::kernel_bound_sides(id, &KernelParams { t, s, x, y, eta, theta })
}

pub fn apriori_json(lambda: f64, c1: f64, c2: f64, horizon: f64) -> srdelab::Result<String> {
    let c = AprioriConstants::trace(lambda, c1, c2, horizon)?;
    Ok(serde_json::to_string(&c).expect("constants serialize"))
}

/// Heat kernel `p_t(x - y)` on the line.
#[pyfunction]
fn heat_kernel(t: f64, x: f64, y: f64) -> PyResult<f64> {
    hk::kernel_value(t, x, y).map_err(py_err)
}

/// `(lhs, rhs)` of one heat-kernel inequality, e.g. `"WEIGHTED_MASS"`.
#[pyfunction]
#[pyo3(signature = (id, t, s = 0.0, x = 0.0, y = 0.0, eta = 0.0, theta = 0.0))]
fn kernel_bound_sides(id: &str, t: f64, s: f64, x: f64, y: f64, eta: f64, theta: f64) -> PyResult<(f64, f64)> {
    kernel_sides_inner(id, t, s, x, y, eta, theta).map_err(py_err)
}

#[pyfunction]
fn beta(lambda: f64, kappa: f64) -> PyResult<f64> {
    weighted_norms::beta(lambda, kappa).map_err(py_err)
}

#[pyfunction]
fn t_star(lambda: f64, kappa: f64) -> PyResult<f64> {
    weighted_norms::t_star(lambda, kappa).map_err(py_err)
}

/// Closed-form log-Grönwall bound for constant data `M, c₁, c₂` at `t`.
#[pyfunction]
fn gronwall_bound(m: f64, c1: f64, c2: f64, t: f64) -> PyResult<f64> {
    log_gronwall_bound(&GronwallData::constant(m, c1, c2), t).map_err(py_err)
}

/// `√(t/π)`, the pointwise variance of the stochastic convolution for `σ ≡ 1`.
#[pyfunction]
fn variance_closed_form(t: f64) -> PyResult<f64> {
    srdelab::convolution::variance_closed_form(t).map_err(py_err)
}

/// Traced a-priori constants as a JSON object.
#[pyfunction]
fn apriori_constants(lambda: f64, c1: f64, c2: f64, horizon: f64) -> PyResult<String> {
    apriori_json(lambda, c1, c2, horizon).map_err(py_err)
}

/// Space-time white-noise cell increments, row-major `nt × nx`.
#[pyfunction]
fn noise_increments(half_width: f64, nx: usize, dt: f64, nt: usize, seed: u64, stream: u64) -> PyResult<Vec<f64>> {
    let g = srdelab::grid::GridSpec::new(half_width, nx, dt, nt).map_err(py_err)?;
    Ok(sample_noise(g, seed, StreamId(stream)).increments().to_vec())
}

/// One trajectory from a TOML config string (defaults when `None`):
/// `(t, x, frames, status)`.
#[pyfunction]
#[pyo3(signature = (config = None, seed = None))]
fn simulate(py: Python<'_>, config: Option<&str>, seed: Option<u64>) -> PyResult<SimulateOutput> {
    let config = config.map(str::to_owned);
    py.detach(move || simulate_inner(config.as_deref(), seed)).map_err(py_err)
}

/// Runs the command line (`["verify-kernel", "--samples", "10"]`) and
/// returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(move || srdelab::cli::main_with_args(std::iter::once("srdelab".to_string()).chain(args)))
}

#[pymodule]
fn srdelab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(heat_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_bound_sides, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(t_star, m)?)?;
    m.add_function(wrap_pyfunction!(gronwall_bound, m)?)?;
    m.add_function(wrap_pyfunction!(variance_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(apriori_constants, m)?)?;
    m.add_function(wrap_pyfunction!(noise_increments, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_defaults_shape() {
        let cfg = "schema = 1\n[grid]\nhalf_width = 2.0\nnx = 21\ndt = 0.01\nnt = 5\n";
        let (t, x, frames, status) = simulate_inner(Some(cfg), Some(3)).unwrap();
        assert_eq!((t.len(), x.len(), frames.len(), frames[0].len()), (6, 21, 6, 21));
        assert_eq!(status, "completed");
        assert_eq!(simulate_inner(Some(cfg), Some(3)).unwrap().2, frames);
        assert!(simulate_inner(Some("schema = 2"), None).is_err());
    }

    #[test]
    fn kernel_sides_by_name() {
        let (lhs, rhs) = kernel_sides_inner("weighted_mass", 1.0, 0.0, 0.0, 0.0, 1.0, 0.0).unwrap();
        assert!(lhs <= rhs && (lhs - 2.774286).abs() < 1e-5);
        assert!(kernel_sides_inner("nope", 1.0, 0.0, 0.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn apriori_constants_round_trip() {
        let v: serde_json::Value = serde_json::from_str(&apriori_json(1.0, 1.0, 0.0, 0.1).unwrap()).unwrap();
        assert_eq!(v["beta"], 4.0);
        assert!(apriori_json(1.0, 1.0, 0.0, 1.0).is_err());
    }
}
