//! Python bindings: finite-chain models, minorization certificates,
//! regeneration cycles, exact Brownian cycle sampling and the bound calculus,
//! exposed as a small extension module.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::collections::HashMap;

use harris_regen::bounds::{
    birge_massart as bm_inner, evaluate_bound, lambda_star_t, legendre_star, BoundQuery,
    BoundRegime, LaplaceTransform,
};
use harris_regen::models::{build_two_state_ctmc, CtmcModel, ModelSpec};
use harris_regen::regeneration::{
    empirical_laplace, kac_ratio, ConstantEstimates, LaplacePoint, ObservableSpec, VstarPoint,
};
use harris_regen::resolvent::{resolvent_kernel, stationary_measure, transition_matrix};
use harris_regen::splitting::{
    compute_minorization, retrospective_regeneration, MinorizationCert, RegenerationStream,
};
use harris_regen::stats::{hill_estimator, Estimate};
use harris_regen::streams::derive_stream;

fn to_py_err(e: harris_regen::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A finite-state continuous-time Markov chain.
#[pyclass(name = "Ctmc")]
struct PyCtmc {
    model: CtmcModel,
}

#[pymethods]
impl PyCtmc {
    /// Two-state chain with rates a: 0->1 and b: 1->0.
    #[staticmethod]
    fn two_state(a: f64, b: f64) -> PyResult<Self> {
        Ok(Self {
            model: build_two_state_ctmc(a, b).map_err(to_py_err)?,
        })
    }

    /// Build from a JSON model document (kinds: ctmc, spinflip).
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec = ModelSpec::from_json(text).map_err(to_py_err)?;
        match spec.build().map_err(to_py_err)? {
            harris_regen::models::BuiltModel::Ctmc(model) => Ok(Self { model }),
            _ => Err(PyValueError::new_err(
                "only finite-chain models build a Ctmc; diffusions are simulated separately",
            )),
        }
    }

    fn n_states(&self) -> usize {
        self.model.n_states()
    }

    fn labels(&self) -> Vec<String> {
        self.model.labels().to_vec()
    }

    fn stationary(&self) -> PyResult<Vec<f64>> {
        Ok(stationary_measure(&self.model)
            .map_err(to_py_err)?
            .weights()
            .to_vec())
    }

    fn transition_matrix(&self, t: f64) -> PyResult<Vec<Vec<f64>>> {
        let p = transition_matrix(&self.model, t).map_err(to_py_err)?;
        let n = self.model.n_states();
        Ok((0..n).map(|i| (0..n).map(|j| p[(i, j)]).collect()).collect())
    }

    fn resolvent(&self) -> PyResult<Vec<Vec<f64>>> {
        let k = resolvent_kernel(&self.model).map_err(to_py_err)?;
        let n = self.model.n_states();
        Ok((0..n).map(|i| k.row(i)).collect())
    }

    /// Minorization certificate over the given small set (default: all
    /// states): returns (small_set, alpha_minor, nu).
    #[pyo3(signature = (small_set=None))]
    fn minorize(&self, small_set: Option<Vec<usize>>) -> PyResult<(Vec<usize>, f64, Vec<f64>)> {
        let cert = self.certificate(small_set)?;
        Ok((
            cert.small_set().to_vec(),
            cert.alpha_minor(),
            cert.nu().to_vec(),
        ))
    }

    /// Regeneration cycles by the retrospective method. Observables are
    /// (name -> state index) indicators; `centered` subtracts the exact
    /// stationary mass. Returns a dict with durations, xi columns and cycle
    /// start states.
    #[pyo3(signature = (n_cycles, seed, x0=0, small_set=None, indicators=None, centered=false))]
    #[allow(clippy::too_many_arguments)]
    fn cycles<'py>(
        &self,
        py: Python<'py>,
        n_cycles: usize,
        seed: u64,
        x0: usize,
        small_set: Option<Vec<usize>>,
        indicators: Option<HashMap<String, usize>>,
        centered: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cert = self.certificate(small_set)?;
        let kernel = resolvent_kernel(&self.model).map_err(to_py_err)?;
        let mut observables = Vec::new();
        if let Some(inds) = indicators {
            let pi = stationary_measure(&self.model).map_err(to_py_err)?;
            let mut names: Vec<_> = inds.into_iter().collect();
            names.sort();
            for (name, state) in names {
                let spec = if centered {
                    ObservableSpec::centered_indicator(&name, state, &pi).map_err(to_py_err)?
                } else {
                    ObservableSpec::state_indicator(&name, self.model.n_states(), state)
                        .map_err(to_py_err)?
                };
                observables.push(spec);
            }
        }
        let mut rng = derive_stream(seed, 0, "py-cycles");
        let stream = retrospective_regeneration(
            &self.model,
            &cert,
            &kernel,
            x0,
            n_cycles,
            &observables,
            &mut rng,
        )
        .map_err(to_py_err)?;
        stream_to_dict(py, &stream)
    }

    fn __repr__(&self) -> String {
        format!("Ctmc(n_states={})", self.model.n_states())
    }
}

impl PyCtmc {
    fn certificate(&self, small_set: Option<Vec<usize>>) -> PyResult<MinorizationCert> {
        let kernel = resolvent_kernel(&self.model).map_err(to_py_err)?;
        let set: Vec<usize> =
            small_set.unwrap_or_else(|| (0..self.model.n_states()).collect());
        compute_minorization(&kernel, &set).map_err(to_py_err)
    }
}

fn stream_to_dict<'py>(
    py: Python<'py>,
    stream: &RegenerationStream,
) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("initial_duration", stream.initial.duration)?;
    dict.set_item("durations", stream.durations())?;
    let xi = PyDict::new(py);
    for name in &stream.observable_names {
        xi.set_item(name, stream.xi_column(name).map_err(to_py_err)?)?;
    }
    dict.set_item("xi", xi)?;
    if let Some(starts) = &stream.start_states {
        dict.set_item("start_states", starts.clone())?;
    }
    Ok(dict)
}

/// Exact Brownian life-cycle lengths for levels (0, 1): 1/Z1^2 + 1/Z2^2.
#[pyfunction]
fn sample_bm_cycles(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = derive_stream(seed, 0, "py-bm");
    (0..n)
        .map(|_| harris_regen::models::sample_bm_cycle_duration(&mut rng))
        .collect()
}

/// Empirical Laplace transform of cycle lengths: (value, stderr).
#[pyfunction(name = "empirical_laplace")]
fn empirical_laplace_py(durations: Vec<f64>, lam: f64) -> PyResult<(f64, f64)> {
    if durations.len() < 2 {
        return Err(PyValueError::new_err("need at least 2 durations"));
    }
    let stream = RegenerationStream::from_durations(durations[0], durations[1..].to_vec());
    let e = empirical_laplace(&stream, lam).map_err(to_py_err)?;
    Ok((e.value, e.stderr))
}

/// Ratio of cycle integrals with its 99% interval: (ratio, lo, hi).
#[pyfunction(name = "kac_ratio")]
fn kac_ratio_py(xi_f: Vec<f64>, xi_g: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    if xi_f.len() != xi_g.len() || xi_f.is_empty() {
        return Err(PyValueError::new_err("xi columns must share a length"));
    }
    let mut stream =
        RegenerationStream::from_durations(1.0, vec![1.0; xi_f.len()]);
    stream.observable_names = vec!["f".into(), "g".into()];
    for (i, r) in stream.records.iter_mut().enumerate() {
        r.xi = vec![xi_f[i], xi_g[i]];
    }
    stream.initial.xi = vec![0.0, 0.0];
    let k = kac_ratio(&stream, "f", "g").map_err(to_py_err)?;
    Ok((k.ratio, k.ci_low, k.ci_high))
}

/// Hill tail-index estimate on the top k order statistics (default
/// ceil(sqrt(n))).
#[pyfunction(name = "hill_estimator")]
#[pyo3(signature = (samples, k=None))]
fn hill_estimator_py(samples: Vec<f64>, k: Option<usize>) -> PyResult<f64> {
    let k = k.unwrap_or_else(|| (samples.len() as f64).sqrt().ceil() as usize);
    hill_estimator(&samples, k).map_err(to_py_err)
}

/// (sup over lambda of the Bernstein objective, Birge-Massart lower bound).
#[pyfunction(name = "birge_massart")]
fn birge_massart_py(y: f64, v: f64) -> PyResult<(f64, f64)> {
    bm_inner(y, v).map_err(to_py_err)
}

fn transform_from(durations: Option<Vec<f64>>) -> PyResult<LaplaceTransform> {
    match durations {
        None => Ok(LaplaceTransform::BrownianLevels01),
        Some(ds) => {
            if ds.len() < 100 {
                return Err(PyValueError::new_err("need at least 100 durations"));
            }
            let stream = RegenerationStream::from_durations(ds[0], ds[1..].to_vec());
            LaplaceTransform::from_stream(&stream, 50.0).map_err(to_py_err)
        }
    }
}

/// Legendre transform of the cycle-length law at u. Uses the analytic
/// Brownian transform unless cycle durations are supplied.
#[pyfunction(name = "legendre_star")]
#[pyo3(signature = (u, durations=None))]
fn legendre_star_py(u: f64, durations: Option<Vec<f64>>) -> PyResult<f64> {
    legendre_star(&transform_from(durations)?, u).map_err(to_py_err)
}

/// The regular-regime inner maximization for the Brownian transform.
#[pyfunction(name = "lambda_star_t")]
fn lambda_star_t_py(alpha: f64, eta: f64, t: f64, l_t: f64) -> PyResult<f64> {
    lambda_star_t(&LaplaceTransform::BrownianLevels01, alpha, eta, t, l_t).map_err(to_py_err)
}

/// Evaluate a theorem bound. Regimes: "positive_eta", "positive_clt",
/// "null_general", "regular". Returns a dict with the three summands, the
/// total and the vacuous flag.
#[pyfunction(name = "theorem_bound")]
#[pyo3(signature = (regime, t, x, k_f, m, eta=None, vstar_t=None, alpha=None, l_t=None, durations=None))]
#[allow(clippy::too_many_arguments)]
fn theorem_bound_py<'py>(
    py: Python<'py>,
    regime: &str,
    t: f64,
    x: f64,
    k_f: f64,
    m: f64,
    eta: Option<f64>,
    vstar_t: Option<f64>,
    alpha: Option<f64>,
    l_t: Option<f64>,
    durations: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let regime = match regime {
        "positive_eta" => BoundRegime::PositiveEta,
        "positive_clt" => BoundRegime::PositiveClt,
        "null_general" => BoundRegime::NullGeneral,
        "regular" => BoundRegime::Regular,
        other => {
            return Err(PyValueError::new_err(format!("unknown regime '{other}'")));
        }
    };
    let constants = ConstantEstimates {
        sup_norm: 0.0,
        c_f: Estimate::exact((k_f).max(0.0)),
        k_f,
        b_f: (k_f * k_f).max(k_f),
        m_hat: Estimate::exact(m),
        vstar: vstar_t
            .map(|v| {
                vec![VstarPoint {
                    t,
                    value: v,
                    stderr: 0.0,
                }]
            })
            .unwrap_or_default(),
        laplace: Vec::<LaplacePoint>::new(),
    };
    let q = BoundQuery {
        regime,
        t,
        x,
        eta_dev: eta,
        alpha_reg: alpha,
        l_t,
    };
    let b = evaluate_bound(&q, &constants, &transform_from(durations)?).map_err(to_py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("gaussian_term", b.gaussian_term)?;
    dict.set_item("exponential_term", b.exponential_term)?;
    dict.set_item("clock_term", b.clock_term)?;
    dict.set_item("total", b.total)?;
    dict.set_item("vacuous", b.vacuous)?;
    Ok(dict)
}

#[pymodule]
fn harris_regen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCtmc>()?;
    m.add_function(wrap_pyfunction!(sample_bm_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_laplace_py, m)?)?;
    m.add_function(wrap_pyfunction!(kac_ratio_py, m)?)?;
    m.add_function(wrap_pyfunction!(hill_estimator_py, m)?)?;
    m.add_function(wrap_pyfunction!(birge_massart_py, m)?)?;
    m.add_function(wrap_pyfunction!(legendre_star_py, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_star_t_py, m)?)?;
    m.add_function(wrap_pyfunction!(theorem_bound_py, m)?)?;
    Ok(())
}
