//! Concrete process families: finite-state continuous-time Markov chains
//! (including compiled spin-flip systems), 1-D diffusions with hitting-time
//! regeneration, and exact Brownian cycle-length sampling.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::regeneration::ObservableSpec;
use crate::splitting::{RegenerationRecord, RegenerationStream};

/// Maximum number of spin-flip sites; keeps the state space (2^|V|) small
/// enough for dense resolvent computations.
pub const MAX_SPINFLIP_SITES: usize = 12;

/// Row-sum tolerance for generator validation.
pub const GENERATOR_ROW_SUM_TOL: f64 = 1e-12;

/// A finite-state CTMC given by its generator matrix. The reference measure
/// is the counting measure by default, which makes the transition density
/// p_t(x,y) a plain matrix-exponential entry.
#[derive(Debug, Clone)]
pub struct CtmcModel {
    labels: Vec<String>,
    generator: DMatrix<f64>,
    reference_measure: Vec<f64>,
}

impl CtmcModel {
    pub fn new(labels: Vec<String>, generator: DMatrix<f64>) -> Result<Self> {
        let n = labels.len();
        let reference = vec![1.0; n];
        Self::with_reference(labels, generator, reference)
    }

    pub fn with_reference(
        labels: Vec<String>,
        generator: DMatrix<f64>,
        reference_measure: Vec<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        if n < 2 {
            return Err(Error::InvalidModel("state count must be >= 2".into()));
        }
        if generator.nrows() != n || generator.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "generator must be {n}x{n}, got {}x{}",
                generator.nrows(),
                generator.ncols()
            )));
        }
        if reference_measure.len() != n || reference_measure.iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidModel(
                "reference measure must be positive with one weight per state".into(),
            ));
        }
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                let q = generator[(i, j)];
                if i != j && q < 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "off-diagonal rate generator[{i}][{j}] = {q} is negative"
                    )));
                }
                row_sum += q;
            }
            if row_sum.abs() > GENERATOR_ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!(
                    "generator row {i} sums to {row_sum}, must be 0 within {GENERATOR_ROW_SUM_TOL}"
                )));
            }
        }
        let model = Self {
            labels,
            generator,
            reference_measure,
        };
        if !model.is_irreducible() {
            return Err(Error::InvalidModel(
                "rate graph is not strongly connected (chain reducible)".into(),
            ));
        }
        Ok(model)
    }

    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn reference_measure(&self) -> &[f64] {
        &self.reference_measure
    }

    /// Total exit rate -generator[x][x].
    pub fn exit_rate(&self, x: usize) -> f64 {
        -self.generator[(x, x)]
    }

    fn is_irreducible(&self) -> bool {
        let n = self.n_states();
        let reach = |forward: bool| -> usize {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut count = 1;
            while let Some(i) = stack.pop() {
                for (j, seen_j) in seen.iter_mut().enumerate() {
                    let rate = if forward {
                        self.generator[(i, j)]
                    } else {
                        self.generator[(j, i)]
                    };
                    if i != j && rate > 0.0 && !*seen_j {
                        *seen_j = true;
                        count += 1;
                        stack.push(j);
                    }
                }
            }
            count
        };
        reach(true) == n && reach(false) == n
    }

    /// Stable content hash of the model definition.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for l in &self.labels {
            hasher.update(l.as_bytes());
            hasher.update([0u8]);
        }
        for v in self.generator.iter() {
            hasher.update(v.to_le_bytes());
        }
        for w in &self.reference_measure {
            hasher.update(w.to_le_bytes());
        }
        hex_digest(&hasher.finalize())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Canonical two-state chain with rates a: 0->1 and b: 1->0.
pub fn build_two_state_ctmc(a: f64, b: f64) -> Result<CtmcModel> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::InvalidModel(format!(
            "two-state rates must be positive, got a={a}, b={b}"
        )));
    }
    let generator = DMatrix::from_row_slice(2, 2, &[-a, a, b, -b]);
    CtmcModel::new(vec!["0".into(), "1".into()], generator)
}

// ---------------------------------------------------------------------------
// Spin-flip systems
// ---------------------------------------------------------------------------

/// Named flip-rate functions selectable by string key in model documents.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SpinRate {
    /// c_i(eta) = rate for every site and configuration.
    Constant { rate: f64 },
    /// Rate depends on how the spin sits relative to the sum of its lattice
    /// neighbours: `aligned` when the spin matches the majority sign,
    /// `opposed` when it contradicts it, `tie` when the neighbour sum is zero
    /// or the site has no neighbours.
    MajorityOfNeighbors {
        aligned: f64,
        opposed: f64,
        tie: f64,
    },
}

impl SpinRate {
    fn rate(&self, spec: &SpinFlipSpec, site_idx: usize, config: &[i8]) -> f64 {
        match self {
            SpinRate::Constant { rate } => *rate,
            SpinRate::MajorityOfNeighbors {
                aligned,
                opposed,
                tie,
            } => {
                let here = spec.sites[site_idx];
                let mut nbr_sum = 0i32;
                for (k, &s) in spec.sites.iter().enumerate() {
                    if (s - here).abs() == 1 {
                        nbr_sum += i32::from(config[k]);
                    }
                }
                if nbr_sum == 0 {
                    *tie
                } else if (nbr_sum > 0) == (config[site_idx] > 0) {
                    *aligned
                } else {
                    *opposed
                }
            }
        }
    }
}

/// A finite spin-flip system on sites of the integer lattice; configurations
/// are elements of {-1,+1}^V.
#[derive(Debug, Clone)]
pub struct SpinFlipSpec {
    sites: Vec<i64>,
    rate_fn: SpinRate,
    rate_caps: Vec<f64>,
}

impl SpinFlipSpec {
    pub fn new(sites: Vec<i64>, rate_fn: SpinRate, rate_caps: Vec<f64>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidModel("spin-flip needs at least one site".into()));
        }
        if sites.len() > MAX_SPINFLIP_SITES {
            return Err(Error::InvalidModel(format!(
                "spin-flip supports at most {MAX_SPINFLIP_SITES} sites, got {}",
                sites.len()
            )));
        }
        if rate_caps.len() != sites.len() {
            return Err(Error::InvalidModel(
                "need one rate cap per site".into(),
            ));
        }
        let spec = Self {
            sites,
            rate_fn,
            rate_caps,
        };
        // Exhaustive cap check over the full configuration space.
        let n_sites = spec.sites.len();
        for mask in 0..(1usize << n_sites) {
            let config = spec.config_of(mask);
            for i in 0..n_sites {
                let c = spec.rate_fn.rate(&spec, i, &config);
                if !(c >= 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "rate c_{i} negative at configuration {mask}"
                    )));
                }
                if c > spec.rate_caps[i] {
                    return Err(Error::InvalidModel(format!(
                        "rate c_{i}={c} exceeds cap M_{i}={} at configuration {mask}",
                        spec.rate_caps[i]
                    )));
                }
            }
        }
        Ok(spec)
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    fn config_of(&self, mask: usize) -> Vec<i8> {
        (0..self.sites.len())
            .map(|i| if mask & (1 << i) != 0 { 1 } else { -1 })
            .collect()
    }

    fn label_of(&self, mask: usize) -> String {
        (0..self.sites.len())
            .map(|i| if mask & (1 << i) != 0 { '+' } else { '-' })
            .collect()
    }
}

/// Expand a spin-flip system into an explicit CTMC on {-1,+1}^V: the
/// generator carries rate c_i(eta) from eta to the single-site flip eta^i and
/// zero between non-adjacent configurations.
pub fn compile_spinflip(spec: &SpinFlipSpec) -> Result<CtmcModel> {
    let n_sites = spec.n_sites();
    let n = 1usize << n_sites;
    let mut generator = DMatrix::zeros(n, n);
    for mask in 0..n {
        let config = spec.config_of(mask);
        let mut total = 0.0;
        for i in 0..n_sites {
            let c = spec.rate_fn.rate(spec, i, &config);
            let flipped = mask ^ (1 << i);
            generator[(mask, flipped)] = c;
            total += c;
        }
        generator[(mask, mask)] = -total;
    }
    let labels = (0..n).map(|m| spec.label_of(m)).collect();
    CtmcModel::new(labels, generator)
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// A piecewise-constant trajectory sample: state `values[k]` holds on
/// [times[k], times[k+1]) and the last state holds up to `horizon`.
#[derive(Debug, Clone)]
pub struct PathSegment {
    pub times: Vec<f64>,
    pub values: Vec<usize>,
    pub horizon: f64,
}

impl PathSegment {
    /// Occupation time of each state over [0, horizon].
    pub fn occupation(&self, n_states: usize) -> Vec<f64> {
        let mut occ = vec![0.0; n_states];
        for k in 0..self.times.len() {
            let end = if k + 1 < self.times.len() {
                self.times[k + 1]
            } else {
                self.horizon
            };
            occ[self.values[k]] += end - self.times[k];
        }
        occ
    }
}

/// Exact event-driven simulation of the CTMC on [0, horizon].
pub fn simulate_ctmc_path<R: Rng>(
    model: &CtmcModel,
    x0: usize,
    horizon: f64,
    rng: &mut R,
) -> Result<PathSegment> {
    if x0 >= model.n_states() {
        return Err(Error::InvalidQuery(format!("state {x0} out of range")));
    }
    if !(horizon >= 0.0) {
        return Err(Error::InvalidQuery("horizon must be >= 0".into()));
    }
    let mut times = vec![0.0];
    let mut values = vec![x0];
    let mut t = 0.0;
    let mut x = x0;
    loop {
        let rate = model.exit_rate(x);
        debug_assert!(rate > 0.0, "irreducible chain has positive exit rates");
        let hold: f64 = rng.sample::<f64, _>(Exp1) / rate;
        t += hold;
        if t >= horizon {
            break;
        }
        x = sample_next_state(model, x, rng);
        times.push(t);
        values.push(x);
    }
    Ok(PathSegment {
        times,
        values,
        horizon,
    })
}

pub(crate) fn sample_next_state<R: Rng>(model: &CtmcModel, x: usize, rng: &mut R) -> usize {
    let rate = model.exit_rate(x);
    let mut u = rng.random::<f64>() * rate;
    let n = model.n_states();
    for j in 0..n {
        if j == x {
            continue;
        }
        let q = model.generator()[(x, j)];
        if q > 0.0 {
            u -= q;
            if u <= 0.0 {
                return j;
            }
        }
    }
    // Floating-point leftover lands on the last positive rate.
    (0..n)
        .rev()
        .find(|&j| j != x && model.generator()[(x, j)] > 0.0)
        .expect("positive exit rate implies a positive off-diagonal entry")
}

// ---------------------------------------------------------------------------
// Brownian cycles
// ---------------------------------------------------------------------------

/// Exact sample of the Brownian life-cycle length R_2 - R_1 for levels (0, 1):
/// the sum of two independent level-1 first-passage times, each 1/Z^2 with
/// Z standard normal.
pub fn sample_bm_cycle_duration<R: Rng>(rng: &mut R) -> f64 {
    let mut passage = || loop {
        let z: f64 = rng.sample(StandardNormal);
        if z != 0.0 {
            return 1.0 / (z * z);
        }
    };
    passage() + passage()
}

// ---------------------------------------------------------------------------
// 1-D diffusions with hitting-time regeneration
// ---------------------------------------------------------------------------

/// Named drift functions selectable in model documents.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum DriftFn {
    Zero,
    /// b(x) = -rate * x.
    MeanReverting { rate: f64 },
}

impl DriftFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DriftFn::Zero => 0.0,
            DriftFn::MeanReverting { rate } => -rate * x,
        }
    }
}

/// Default cap on a single cycle's duration before it is discarded.
pub const DEFAULT_MAX_CYCLE_DURATION: f64 = 1.0e4;

/// A 1-D diffusion dX = b(X)dt + sigma dW with regeneration by alternating
/// hits of `regen_high` then `regen_low`, detected by sign change on the
/// Euler grid.
#[derive(Debug, Clone)]
pub struct Diffusion1D {
    pub drift: DriftFn,
    pub sigma: f64,
    pub regen_low: f64,
    pub regen_high: f64,
    pub step: f64,
    pub max_cycle_duration: f64,
}

impl Diffusion1D {
    pub fn new(
        drift: DriftFn,
        sigma: f64,
        regen_low: f64,
        regen_high: f64,
        step: f64,
    ) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidModel("dispersion must be positive".into()));
        }
        if !(regen_low < regen_high) || !regen_low.is_finite() || !regen_high.is_finite() {
            return Err(Error::InvalidModel(
                "regeneration levels must be finite with low < high".into(),
            ));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidModel("step must be positive".into()));
        }
        Ok(Self {
            drift,
            sigma,
            regen_low,
            regen_high,
            step,
            max_cycle_duration: DEFAULT_MAX_CYCLE_DURATION,
        })
    }

    pub fn with_max_cycle(mut self, max: f64) -> Self {
        self.max_cycle_duration = max;
        self
    }

    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("{:?}", self.drift).as_bytes());
        for v in [
            self.sigma,
            self.regen_low,
            self.regen_high,
            self.step,
            self.max_cycle_duration,
        ] {
            hasher.update(v.to_le_bytes());
        }
        hex_digest(&hasher.finalize())
    }
}

/// One cycle on the Euler grid from `start`: run until the level `high` is
/// crossed, then until `low` is crossed. Returns (duration, per-observable
/// trapezoid integrals, truncated flag, final position).
fn diffusion_one_cycle<R: Rng>(
    model: &Diffusion1D,
    start: f64,
    observables: &[ObservableSpec],
    rng: &mut R,
) -> (f64, Vec<f64>, bool) {
    let dt = model.step;
    let sqrt_dt = dt.sqrt();
    let max_steps = (model.max_cycle_duration / dt).ceil() as u64;
    let mut x = start;
    let mut fx: Vec<f64> = observables.iter().map(|o| o.eval_position(x)).collect();
    let mut xi = vec![0.0; observables.len()];
    let mut hit_high = false;
    let mut steps: u64 = 0;
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let x_new = x + model.drift.eval(x) * dt + model.sigma * sqrt_dt * z;
        steps += 1;
        for (k, o) in observables.iter().enumerate() {
            let f_new = o.eval_position(x_new);
            xi[k] += 0.5 * (fx[k] + f_new) * dt;
            fx[k] = f_new;
        }
        if !hit_high {
            if (x - model.regen_high) * (x_new - model.regen_high) <= 0.0 {
                hit_high = true;
            }
        } else if (x - model.regen_low) * (x_new - model.regen_low) <= 0.0 {
            return (steps as f64 * dt, xi, false);
        }
        x = x_new;
        if steps >= max_steps {
            return (steps as f64 * dt, xi, true);
        }
    }
}

/// Generate regeneration cycles of the diffusion started at the lower level.
/// The first completed cycle is stored as the stream's initial segment; each
/// record carries the trapezoid-rule integral of every observable. Cycles
/// exceeding `max_cycle_duration` are discarded and counted.
pub fn simulate_diffusion_cycles<R: Rng>(
    model: &Diffusion1D,
    n_cycles: usize,
    observables: &[ObservableSpec],
    rng: &mut R,
) -> Result<RegenerationStream> {
    if n_cycles < 1 {
        return Err(Error::InvalidQuery("n_cycles must be >= 1".into()));
    }
    let names: Vec<String> = observables.iter().map(|o| o.name.clone()).collect();
    let mut initial: Option<RegenerationRecord> = None;
    let mut records = Vec::with_capacity(n_cycles);
    let mut discarded: u64 = 0;
    while records.len() < n_cycles {
        let (duration, xi, truncated) =
            diffusion_one_cycle(model, model.regen_low, observables, rng);
        if truncated {
            discarded += 1;
            continue;
        }
        if initial.is_none() {
            initial = Some(RegenerationRecord {
                index: 1,
                duration,
                xi,
            });
        } else {
            records.push(RegenerationRecord {
                index: records.len() as u64 + 2,
                duration,
                xi,
            });
        }
    }
    Ok(RegenerationStream {
        initial: initial.expect("at least one kept cycle"),
        records,
        clock_times: None,
        start_states: None,
        jump_uniforms: None,
        discarded,
        observable_names: names,
    })
}

/// One cycle from an arbitrary start point; used for C(f) estimation on
/// diffusions. Returns (integral of the observable, duration, truncated).
pub fn diffusion_first_cycle<R: Rng>(
    model: &Diffusion1D,
    observable: &ObservableSpec,
    start: f64,
    rng: &mut R,
) -> (f64, f64, bool) {
    let (duration, xi, truncated) =
        diffusion_one_cycle(model, start, std::slice::from_ref(observable), rng);
    (xi[0], duration, truncated)
}

// ---------------------------------------------------------------------------
// Model documents
// ---------------------------------------------------------------------------

/// JSON-loadable model definitions.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Ctmc {
        states: Vec<String>,
        generator: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference_measure: Option<Vec<f64>>,
    },
    Spinflip {
        sites: Vec<i64>,
        rate_fn: SpinRate,
        rate_caps: Vec<f64>,
    },
    Diffusion1d {
        drift: DriftFn,
        sigma: f64,
        regen_levels: (f64, f64),
        step: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_cycle_duration: Option<f64>,
    },
    /// Standard Brownian motion with levels (0, 1) and exact cycle sampling.
    Bm {},
}

/// A model ready for simulation.
#[derive(Debug, Clone)]
pub enum BuiltModel {
    Ctmc(CtmcModel),
    Diffusion(Diffusion1D),
    /// Exact Brownian cycle sampler (durations only).
    BrownianExact,
}

impl ModelSpec {
    pub fn build(&self) -> Result<BuiltModel> {
        match self {
            ModelSpec::Ctmc {
                states,
                generator,
                reference_measure,
            } => {
                let n = states.len();
                if generator.len() != n || generator.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidModel("generator must be square".into()));
                }
                let flat: Vec<f64> = generator.iter().flatten().copied().collect();
                let g = DMatrix::from_row_slice(n, n, &flat);
                let model = match reference_measure {
                    Some(w) => CtmcModel::with_reference(states.clone(), g, w.clone())?,
                    None => CtmcModel::new(states.clone(), g)?,
                };
                Ok(BuiltModel::Ctmc(model))
            }
            ModelSpec::Spinflip {
                sites,
                rate_fn,
                rate_caps,
            } => {
                let spec = SpinFlipSpec::new(sites.clone(), rate_fn.clone(), rate_caps.clone())?;
                Ok(BuiltModel::Ctmc(compile_spinflip(&spec)?))
            }
            ModelSpec::Diffusion1d {
                drift,
                sigma,
                regen_levels,
                step,
                max_cycle_duration,
            } => {
                let mut d =
                    Diffusion1D::new(drift.clone(), *sigma, regen_levels.0, regen_levels.1, *step)?;
                if let Some(m) = max_cycle_duration {
                    d = d.with_max_cycle(*m);
                }
                Ok(BuiltModel::Diffusion(d))
            }
            ModelSpec::Bm {} => Ok(BuiltModel::BrownianExact),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_string(self).expect("model spec serializes").as_bytes());
        hex_digest(&hasher.finalize())
    }
}
