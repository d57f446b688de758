//! Continuous-time Nummelin splitting for finite-state chains.
//!
//! Given the resolvent kernel U^1 and a small set C, a minorization
//! certificate (C, alpha, nu) with U^1(x,dy) >= alpha 1_C(x) nu(dy) turns the
//! skeleton chain sampled at unit-rate exponential times into a chain with a
//! recurrent atom A = C x [0, alpha] x E on the enlarged space. Regeneration
//! times are the jump times following atom visits; the cycles between them
//! are i.i.d. from the first regeneration on.
//!
//! Two generators are provided:
//! * `forward_split_chain` follows the four-step construction literally
//!   (jump-time density, frozen coordinates, Markov-bridge fill, renewal);
//! * `retrospective_regeneration` simulates the original chain plus an
//!   independent unit-rate clock and resolves the atom membership of each
//!   clock tick retrospectively once the next skeleton state is known.
//!
//! The two are distributionally equivalent; the retrospective method is the
//! workhorse because its path integrals are exact.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, RwLock};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{sample_next_state, CtmcModel};
use crate::regeneration::ObservableSpec;
use crate::resolvent::{matrix_exp, ResolventKernel};

/// One life cycle: duration R_n - R_{n-1} and the additive-functional
/// increments per observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenerationRecord {
    /// Cycle number, 1-based; cycle 1 is the initial segment [0, R_1].
    pub index: u64,
    pub duration: f64,
    pub xi: Vec<f64>,
}

/// An ordered stream of regeneration cycles. The initial segment [0, R_1]
/// has a different law and is always kept apart from the stationary records.
#[derive(Debug, Clone)]
pub struct RegenerationStream {
    pub initial: RegenerationRecord,
    /// Cycles [R_n, R_{n+1}], n >= 1; identically distributed.
    pub records: Vec<RegenerationRecord>,
    /// Optionally retained clock times T_n.
    pub clock_times: Option<Vec<f64>>,
    /// State at the opening regeneration time of each record (X at R_n).
    pub start_states: Option<Vec<usize>>,
    /// Z^2 values drawn at jump times (diagnostic, forward method only).
    pub jump_uniforms: Option<Vec<f64>>,
    /// Cycles discarded due to the max-duration cap (diffusions only).
    pub discarded: u64,
    pub observable_names: Vec<String>,
}

impl RegenerationStream {
    /// Stationary cycle durations (cycle 1 excluded).
    pub fn durations(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.duration).collect()
    }

    /// Stationary xi column for the named observable.
    pub fn xi_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .observable_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidQuery(format!("unknown observable '{name}'")))?;
        Ok(self.records.iter().map(|r| r.xi[idx]).collect())
    }

    /// Build a durations-only stream (used with exact cycle-length samplers).
    pub fn from_durations(initial: f64, durations: Vec<f64>) -> Self {
        let records = durations
            .iter()
            .enumerate()
            .map(|(i, &d)| RegenerationRecord {
                index: i as u64 + 2,
                duration: d,
                xi: Vec::new(),
            })
            .collect();
        Self {
            initial: RegenerationRecord {
                index: 1,
                duration: initial,
                xi: Vec::new(),
            },
            records,
            clock_times: None,
            start_states: None,
            jump_uniforms: None,
            discarded: 0,
            observable_names: Vec::new(),
        }
    }

    /// Total time covered by the stream: R_{N+1}.
    pub fn covered_horizon(&self) -> f64 {
        self.initial.duration + self.records.iter().map(|r| r.duration).sum::<f64>()
    }

    /// Regeneration times R_1, R_2, ... as cumulative sums.
    pub fn regeneration_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.records.len() + 1);
        let mut t = self.initial.duration;
        out.push(t);
        for r in &self.records {
            t += r.duration;
            out.push(t);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Minorization
// ---------------------------------------------------------------------------

/// The triple (C, alpha, nu) certifying U^1(x,dy) >= alpha 1_C(x) nu(dy).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinorizationCert {
    small_set: Vec<usize>,
    alpha_minor: f64,
    nu: Vec<f64>,
    #[serde(skip)]
    in_c: Vec<bool>,
}

impl MinorizationCert {
    pub fn small_set(&self) -> &[usize] {
        &self.small_set
    }

    pub fn alpha_minor(&self) -> f64 {
        self.alpha_minor
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn contains(&self, x: usize) -> bool {
        self.in_c.get(x).copied().unwrap_or(false)
    }

    pub fn sample_nu<R: Rng>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.nu, rng)
    }

    /// Restore the membership table after deserialization.
    pub fn rebuild_membership(&mut self) {
        let n = self.nu.len();
        self.in_c = vec![false; n];
        for &x in &self.small_set {
            if x < n {
                self.in_c[x] = true;
            }
        }
    }
}

fn sample_categorical<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            u -= w;
            if u <= 0.0 {
                return i;
            }
        }
    }
    last_positive
}

/// Maximal-alpha certificate over a given small set: nu is the normalized
/// columnwise minimum of the resolvent rows over C, restricted to C, and
/// alpha is the total minimum mass. The certificate inequality is verified
/// exhaustively before returning.
pub fn compute_minorization(
    kernel: &ResolventKernel,
    small_set: &[usize],
) -> Result<MinorizationCert> {
    let n = kernel.n_states();
    let mut set: Vec<usize> = small_set.to_vec();
    set.sort_unstable();
    set.dedup();
    if set.is_empty() {
        return Err(Error::InvalidCertificate("small set is empty".into()));
    }
    if set.iter().any(|&x| x >= n) {
        return Err(Error::InvalidCertificate("small set index out of range".into()));
    }
    let col_min: Vec<f64> = (0..n)
        .map(|y| {
            set.iter()
                .map(|&x| kernel.entry(x, y))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let alpha: f64 = set.iter().map(|&y| col_min[y]).sum();
    if alpha <= 0.0 {
        return Err(Error::InvalidCertificate(
            "degenerate small set: columnwise minimum vanishes on C".into(),
        ));
    }
    if alpha >= 1.0 {
        return Err(Error::InvalidCertificate(format!(
            "alpha_minor = {alpha} must lie in (0,1)"
        )));
    }
    let mut nu = vec![0.0f64; n];
    for &y in &set {
        nu[y] = col_min[y] / alpha;
    }
    let mut in_c = vec![false; n];
    for &x in &set {
        in_c[x] = true;
    }
    let cert = MinorizationCert {
        small_set: set,
        alpha_minor: alpha,
        nu,
        in_c,
    };
    verify_certificate(&cert, kernel)?;
    Ok(cert)
}

/// Exhaustive check of u1[x][y] >= alpha * nu[y] for all x in C and all y.
pub fn verify_certificate(cert: &MinorizationCert, kernel: &ResolventKernel) -> Result<()> {
    let n = kernel.n_states();
    for &x in &cert.small_set {
        for y in 0..n {
            let slack = kernel.entry(x, y) - cert.alpha_minor * cert.nu[y];
            if slack < -1e-14 {
                return Err(Error::InvalidCertificate(format!(
                    "certificate violated at (x={x}, y={y}): slack {slack}"
                )));
            }
        }
    }
    Ok(())
}

/// The split-transition kernel Q((z1,z2), dy): nu on the atom, the residual
/// (U^1 - alpha nu)/(1-alpha) on C off the atom, and the plain resolvent row
/// off C. Always a probability vector.
pub fn kernel_q(
    cert: &MinorizationCert,
    kernel: &ResolventKernel,
    z1: usize,
    z2: f64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&z2) {
        return Err(Error::InvalidQuery(format!("z2 = {z2} outside [0,1]")));
    }
    let n = kernel.n_states();
    if z1 >= n {
        return Err(Error::InvalidQuery(format!("state {z1} out of range")));
    }
    if !cert.contains(z1) {
        return Ok(kernel.row(z1));
    }
    if z2 <= cert.alpha_minor {
        return Ok(cert.nu.clone());
    }
    let mut out = Vec::with_capacity(n);
    let scale = 1.0 / (1.0 - cert.alpha_minor);
    for y in 0..n {
        let w = (kernel.entry(z1, y) - cert.alpha_minor * cert.nu[y]) * scale;
        if w < -1e-12 {
            return Err(Error::InvalidCertificate(format!(
                "negative residual weight {w} at (z1={z1}, y={y})"
            )));
        }
        out.push(w.max(0.0));
    }
    Ok(out)
}

/// The enlarged-space state Z = (Z^1, Z^2, Z^3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitState {
    pub z1: usize,
    pub z2: f64,
    pub z3: usize,
}

impl SplitState {
    pub fn in_atom(&self, cert: &MinorizationCert) -> bool {
        cert.contains(self.z1) && self.z2 <= cert.alpha_minor
    }

    /// Draw the standard initial law: Z^1 = x, Z^2 ~ U[0,1],
    /// Z^3 ~ Q((x, Z^2), .).
    pub fn sample_initial<R: Rng>(
        cert: &MinorizationCert,
        kernel: &ResolventKernel,
        x: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let z2 = rng.random::<f64>();
        let q = kernel_q(cert, kernel, x, z2)?;
        let z3 = sample_categorical(&q, rng);
        Ok(SplitState { z1: x, z2, z3 })
    }
}

// ---------------------------------------------------------------------------
// Jump-time sampling (step 1)
// ---------------------------------------------------------------------------

struct JumpCdf {
    /// Knot times, uniform spacing.
    dt: f64,
    /// CDF values at knots (normalized to total mass 1 including the tail).
    cdf: Vec<f64>,
    /// Density values at knots (normalized).
    pdf: Vec<f64>,
    /// Mass beyond the last knot, completed as a unit-rate exponential tail.
    tail_mass: f64,
}

impl JumpCdf {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>();
        let body = 1.0 - self.tail_mass;
        let t_end = self.dt * (self.cdf.len() - 1) as f64;
        if u >= body {
            // Exponential tail completion beyond the tabulated range.
            let e: f64 = rng.sample(Exp1);
            return t_end + e;
        }
        // Binary search for the bracketing knot.
        let idx = match self
            .cdf
            .binary_search_by(|c| c.partial_cmp(&u).unwrap())
        {
            Ok(i) => i,
            Err(i) => i,
        };
        let k = idx.clamp(1, self.cdf.len() - 1);
        let (f0, f1) = (self.cdf[k - 1], self.cdf[k]);
        let (p0, p1) = (self.pdf[k - 1], self.pdf[k]);
        let t0 = self.dt * (k - 1) as f64;
        let c = u - f0;
        if f1 <= f0 {
            return t0;
        }
        // Quadratic inversion: F(t0 + s) ~ f0 + p0 s + (p1-p0) s^2 / (2 dt).
        let a = (p1 - p0) / (2.0 * self.dt);
        let s = if a.abs() < 1e-14 * (p0.abs() + 1e-300) || p0 * p0 + 4.0 * a * c < 0.0 {
            if p0 > 0.0 {
                c / p0
            } else {
                self.dt * c / (f1 - f0)
            }
        } else {
            (-p0 + (p0 * p0 + 4.0 * a * c).sqrt()) / (2.0 * a)
        };
        t0 + s.clamp(0.0, self.dt)
    }
}

/// Samples the inter-jump time density e^{-t} p_t(x, x') / u^1(x, x') by
/// numeric inverse CDF. Tables are built lazily, one march per source state
/// covering every destination, and cached behind a read lock.
pub struct JumpSampler<'a> {
    model: &'a CtmcModel,
    kernel: &'a ResolventKernel,
    tables: RwLock<HashMap<usize, Arc<Vec<JumpCdf>>>>,
    dt: f64,
    t_max: f64,
}

impl<'a> JumpSampler<'a> {
    pub fn new(model: &'a CtmcModel, kernel: &'a ResolventKernel) -> Self {
        Self {
            model,
            kernel,
            tables: RwLock::new(HashMap::new()),
            dt: 0.005,
            t_max: 36.0,
        }
    }

    fn tables_for(&self, x: usize) -> Arc<Vec<JumpCdf>> {
        if let Some(t) = self.tables.read().unwrap().get(&x) {
            return Arc::clone(t);
        }
        let built = Arc::new(self.build_tables(x));
        self.tables
            .write()
            .unwrap()
            .entry(x)
            .or_insert(built)
            .clone()
    }

    /// Simpson quadrature of e^{-t} p_t(x, y) on a uniform grid for all y at
    /// once, marching the row of the semigroup with half-step multiplies.
    fn build_tables(&self, x: usize) -> Vec<JumpCdf> {
        let n = self.model.n_states();
        let steps = (self.t_max / self.dt).ceil() as usize;
        let e_half = matrix_exp(&(self.model.generator() * (self.dt / 2.0)));
        let e_half_t = e_half.transpose();
        let mut row = DVector::<f64>::zeros(n);
        row[x] = 1.0;
        let mut cdfs: Vec<Vec<f64>> = vec![Vec::with_capacity(steps + 1); n];
        let mut pdfs: Vec<Vec<f64>> = vec![Vec::with_capacity(steps + 1); n];
        for y in 0..n {
            cdfs[y].push(0.0);
            pdfs[y].push(if y == x { 1.0 } else { 0.0 });
        }
        let mut acc = vec![0.0f64; n];
        let mut t = 0.0;
        let mut g_prev: Vec<f64> = (0..n).map(|y| row[y]).collect(); // e^{-0} p_0
        for _ in 0..steps {
            let row_mid = &e_half_t * &row;
            let row_next = &e_half_t * &row_mid;
            let w_mid = (-(t + self.dt / 2.0)).exp();
            let w_next = (-(t + self.dt)).exp();
            for y in 0..n {
                let gm = w_mid * row_mid[y];
                let g1 = w_next * row_next[y];
                acc[y] += (g_prev[y] + 4.0 * gm + g1) * (self.dt / 6.0);
                cdfs[y].push(acc[y]);
                pdfs[y].push(g1);
                g_prev[y] = g1;
            }
            row = row_next;
            t += self.dt;
        }
        (0..n)
            .map(|y| {
                let mass = self.kernel.entry(x, y);
                let quad = acc[y];
                // The un-tabulated tail is completed as exponential mass.
                let tail = (mass - quad).max(0.0);
                let cdf: Vec<f64> = cdfs[y].iter().map(|c| c / mass).collect();
                let pdf: Vec<f64> = pdfs[y].iter().map(|p| p / mass).collect();
                JumpCdf {
                    dt: self.dt,
                    cdf,
                    pdf,
                    tail_mass: (tail / mass).max(0.0),
                }
            })
            .collect()
    }

    /// Draw an inter-jump time for the pair (x, x3).
    pub fn sample<R: Rng>(&self, x: usize, x3: usize, rng: &mut R) -> Result<f64> {
        if self.kernel.entry(x, x3) <= 0.0 {
            return Err(Error::InvalidQuery(format!(
                "unreachable pair ({x}, {x3}): u1 entry is zero"
            )));
        }
        let tables = self.tables_for(x);
        Ok(tables[x3].sample(rng))
    }
}

/// Convenience wrapper drawing a single jump time;
/// for bulk sampling construct a `JumpSampler` once and reuse it.
pub fn sample_jump_time<R: Rng>(
    kernel: &ResolventKernel,
    model: &CtmcModel,
    x: usize,
    x3: usize,
    rng: &mut R,
) -> Result<f64> {
    JumpSampler::new(model, kernel).sample(x, x3, rng)
}

// ---------------------------------------------------------------------------
// Bridge sampling (step 3)
// ---------------------------------------------------------------------------

/// Categorical sample from the Markov-bridge law
/// p_s(x, y) p_{total-s}(y, x3) / p_total(x, x3).
pub fn sample_bridge_state<R: Rng>(
    model: &CtmcModel,
    x: usize,
    x3: usize,
    total: f64,
    s: f64,
    rng: &mut R,
) -> Result<usize> {
    if !(s > 0.0 && s < total) {
        return Err(Error::InvalidQuery(format!(
            "bridge time s={s} must lie strictly inside (0, {total})"
        )));
    }
    let n = model.n_states();
    let p_s = matrix_exp(&(model.generator() * s));
    let p_rest = matrix_exp(&(model.generator() * (total - s)));
    let mut weights = Vec::with_capacity(n);
    let mut sum = 0.0;
    for y in 0..n {
        let w = (p_s[(x, y)] * p_rest[(y, x3)]).max(0.0);
        weights.push(w);
        sum += w;
    }
    if sum <= 0.0 {
        // Finite irreducible chains have strictly positive densities; the
        // paper's fixed-point fallback is unreachable here.
        return Err(Error::Numeric(format!(
            "zero bridge density for ({x} -> {x3}) over {total}"
        )));
    }
    Ok(sample_categorical(&weights, rng))
}

// ---------------------------------------------------------------------------
// Forward split chain (steps 1-4)
// ---------------------------------------------------------------------------

/// Options for the forward construction.
#[derive(Debug, Clone)]
pub struct ForwardOptions {
    /// Observation-grid points per inter-jump interval for the bridge fill.
    pub bridge_points: usize,
    pub retain_clock: bool,
    pub retain_uniforms: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            bridge_points: 32,
            retain_clock: false,
            retain_uniforms: false,
        }
    }
}

/// Simulate the split chain by the four-step recipe and collect regeneration
/// cycles. The xi integrals are trapezoid sums over the bridge grid.
#[allow(clippy::too_many_arguments)]
pub fn forward_split_chain<R: Rng>(
    model: &CtmcModel,
    cert: &MinorizationCert,
    kernel: &ResolventKernel,
    z0: SplitState,
    n_cycles: usize,
    observables: &[ObservableSpec],
    opts: &ForwardOptions,
    rng: &mut R,
) -> Result<RegenerationStream> {
    if n_cycles < 2 {
        return Err(Error::InvalidQuery("n_cycles must be >= 2".into()));
    }
    if !(0.0..=1.0).contains(&z0.z2) {
        return Err(Error::InvalidQuery("z0.z2 outside [0,1]".into()));
    }
    let sampler = JumpSampler::new(model, kernel);
    let names: Vec<String> = observables.iter().map(|o| o.name.clone()).collect();
    let f_tables: Vec<Vec<f64>> = observables
        .iter()
        .map(|o| o.state_table(model))
        .collect::<Result<_>>()?;

    let mut z = z0;
    let mut t = 0.0;
    let mut last_r = 0.0;
    let mut pending_s = false;
    let mut cycle_start = 0.0;
    let mut cycle_start_state = z.z1;
    let mut xi_acc = vec![0.0f64; observables.len()];

    let mut initial: Option<RegenerationRecord> = None;
    let mut records: Vec<RegenerationRecord> = Vec::with_capacity(n_cycles);
    let mut start_states: Vec<usize> = Vec::with_capacity(n_cycles);
    let mut clock = if opts.retain_clock { Some(vec![0.0]) } else { None };
    let mut uniforms = if opts.retain_uniforms {
        Some(Vec::new())
    } else {
        None
    };

    while records.len() < n_cycles {
        // Step 1: new jump time from e^{-t} p_t(z1, z3) / u1(z1, z3).
        let sigma = sampler.sample(z.z1, z.z3, rng)?;
        let t_next = t + sigma;

        // Steps 2-3: Z^2, Z^3 frozen; fill Z^1 by successive bridge draws on
        // the observation grid and accumulate the trapezoid rule.
        if !observables.is_empty() {
            let bp = opts.bridge_points.max(1);
            let delta = sigma / bp as f64;
            let e_delta = matrix_exp(&(model.generator() * delta));
            let n = model.n_states();
            // Backward vectors b_j(y) = p_{(bp-j) delta}(y, z3).
            let mut back: Vec<DVector<f64>> = Vec::with_capacity(bp + 1);
            let mut b = DVector::<f64>::zeros(n);
            b[z.z3] = 1.0;
            back.push(b.clone());
            for _ in 0..bp {
                b = &e_delta * &b;
                back.push(b.clone());
            }
            back.reverse();
            let mut y = z.z1;
            for (k, f) in f_tables.iter().enumerate() {
                xi_acc[k] += 0.5 * f[y] * delta;
            }
            for back_j in back.iter().take(bp).skip(1) {
                // y' ~ p_delta(y, y') p_{(bp-j) delta}(y', z3) / p_{(bp-j+1) delta}(y, z3)
                let mut weights = Vec::with_capacity(n);
                for yp in 0..n {
                    weights.push((e_delta[(y, yp)] * back_j[yp]).max(0.0));
                }
                y = sample_categorical(&weights, rng);
                for (k, f) in f_tables.iter().enumerate() {
                    xi_acc[k] += f[y] * delta;
                }
            }
            for (k, f) in f_tables.iter().enumerate() {
                xi_acc[k] += 0.5 * f[z.z3] * delta;
            }
        }

        // Step 4: renewal at the jump time.
        let z1_new = z.z3;
        let z2_new = rng.random::<f64>();
        let q = kernel_q(cert, kernel, z1_new, z2_new)?;
        let z3_new = sample_categorical(&q, rng);
        z = SplitState {
            z1: z1_new,
            z2: z2_new,
            z3: z3_new,
        };
        t = t_next;
        if let Some(c) = clock.as_mut() {
            c.push(t);
        }
        if let Some(u) = uniforms.as_mut() {
            u.push(z2_new);
        }

        // Regeneration bookkeeping: R = first jump after an atom visit.
        if pending_s {
            let record = RegenerationRecord {
                index: if initial.is_none() {
                    1
                } else {
                    records.len() as u64 + 2
                },
                duration: t - cycle_start,
                xi: xi_acc.clone(),
            };
            if initial.is_none() {
                initial = Some(record);
            } else {
                records.push(record);
                start_states.push(cycle_start_state);
            }
            last_r = t;
            pending_s = false;
            cycle_start = t;
            cycle_start_state = z.z1;
            xi_acc.iter_mut().for_each(|v| *v = 0.0);
        }
        // Atom check at this jump time (strictly after the last R).
        if t > last_r && z.in_atom(cert) {
            pending_s = true;
        }
    }

    Ok(RegenerationStream {
        initial: initial.expect("n_cycles >= 2 forces at least one closed cycle"),
        records,
        clock_times: clock,
        start_states: Some(start_states),
        jump_uniforms: uniforms,
        discarded: 0,
        observable_names: names,
    })
}

// ---------------------------------------------------------------------------
// Retrospective regeneration
// ---------------------------------------------------------------------------

/// Where the chain starts.
#[derive(Debug, Clone, Copy)]
pub enum StartLaw {
    State(usize),
    /// Start from the certificate measure nu.
    Nu,
}

/// When cycle generation stops.
#[derive(Debug, Clone, Copy)]
pub enum CycleTarget {
    /// Collect this many stationary cycles (after the initial segment).
    Cycles(usize),
    /// Run until some regeneration time exceeds the horizon.
    Horizon(f64),
    /// Stop at the first regeneration (initial segment only).
    FirstRegeneration,
}

/// Retrospective generator: simulate the chain exactly together with an
/// independent unit-rate clock; at each tick T_{m+1}, with the previous tick
/// at a state x in C and the new skeleton state y, declare the previous tick
/// an atom visit with probability alpha nu(y) / u1[x][y], in which case
/// T_{m+1} is a regeneration time. Additive functionals are integrated
/// exactly along the piecewise-constant path.
#[allow(clippy::too_many_arguments)]
pub fn retrospective_engine<R: Rng>(
    model: &CtmcModel,
    cert: &MinorizationCert,
    kernel: &ResolventKernel,
    start: StartLaw,
    target: CycleTarget,
    observables: &[ObservableSpec],
    retain_clock: bool,
    rng: &mut R,
) -> Result<RegenerationStream> {
    let names: Vec<String> = observables.iter().map(|o| o.name.clone()).collect();
    let f_tables: Vec<Vec<f64>> = observables
        .iter()
        .map(|o| o.state_table(model))
        .collect::<Result<_>>()?;
    let n_obs = observables.len();

    let mut x = match start {
        StartLaw::State(i) => {
            if i >= model.n_states() {
                return Err(Error::InvalidQuery(format!("state {i} out of range")));
            }
            i
        }
        StartLaw::Nu => cert.sample_nu(rng),
    };

    let mut t = 0.0;
    let mut next_jump = t + rng.sample::<f64, _>(Exp1) / model.exit_rate(x);
    let mut next_tick = t + rng.sample::<f64, _>(Exp1);
    let mut prev_tick_time = 0.0;
    let mut prev_tick_state = x;
    let mut last_r = 0.0;
    let mut xi_acc = vec![0.0f64; n_obs];
    let mut cycle_start = 0.0;
    let mut cycle_start_state = x;

    let mut initial: Option<RegenerationRecord> = None;
    let mut records: Vec<RegenerationRecord> = Vec::new();
    let mut start_states: Vec<usize> = Vec::new();
    let mut clock = if retain_clock { Some(vec![0.0]) } else { None };

    let done = |initial: &Option<RegenerationRecord>,
                records: &Vec<RegenerationRecord>,
                last_r: f64| match target {
        CycleTarget::Cycles(n) => initial.is_some() && records.len() >= n,
        CycleTarget::Horizon(h) => initial.is_some() && last_r >= h,
        CycleTarget::FirstRegeneration => initial.is_some(),
    };
    if let CycleTarget::Cycles(n) = target {
        if n < 2 {
            return Err(Error::InvalidQuery("n_cycles must be >= 2".into()));
        }
    }

    while !done(&initial, &records, last_r) {
        if next_jump < next_tick {
            // Gillespie transition of the underlying chain.
            let dt = next_jump - t;
            for (k, f) in f_tables.iter().enumerate() {
                xi_acc[k] += f[x] * dt;
            }
            t = next_jump;
            x = sample_next_state(model, x, rng);
            next_jump = t + rng.sample::<f64, _>(Exp1) / model.exit_rate(x);
        } else {
            // Clock tick T_{m+1}.
            let dt = next_tick - t;
            for (k, f) in f_tables.iter().enumerate() {
                xi_acc[k] += f[x] * dt;
            }
            t = next_tick;
            next_tick = t + rng.sample::<f64, _>(Exp1);
            if let Some(c) = clock.as_mut() {
                c.push(t);
            }
            let y_new = x;
            // The previous tick is an atom candidate only strictly after the
            // last regeneration time.
            if prev_tick_time > last_r && cert.contains(prev_tick_state) {
                let u1 = kernel.entry(prev_tick_state, y_new);
                let p = cert.alpha_minor() * cert.nu()[y_new] / u1;
                if p > 1.0 + 1e-12 {
                    return Err(Error::InvalidCertificate(format!(
                        "retrospective coin probability {p} exceeds 1"
                    )));
                }
                if rng.random::<f64>() < p {
                    // Regeneration at this tick.
                    let record = RegenerationRecord {
                        index: if initial.is_none() {
                            1
                        } else {
                            records.len() as u64 + 2
                        },
                        duration: t - cycle_start,
                        xi: xi_acc.clone(),
                    };
                    if initial.is_none() {
                        initial = Some(record);
                    } else {
                        records.push(record);
                        start_states.push(cycle_start_state);
                    }
                    last_r = t;
                    cycle_start = t;
                    cycle_start_state = y_new;
                    xi_acc.iter_mut().for_each(|v| *v = 0.0);
                }
            }
            prev_tick_time = t;
            prev_tick_state = y_new;
        }
    }

    Ok(RegenerationStream {
        initial: initial.expect("loop exits only once the initial cycle closed"),
        records,
        clock_times: clock,
        start_states: Some(start_states),
        jump_uniforms: None,
        discarded: 0,
        observable_names: names,
    })
}

/// Duration-only Brownian cycle stream (exact sampling) whose regeneration
/// times cover at least `horizon`.
pub fn simulate_until_horizon_bm<R: Rng>(horizon: f64, rng: &mut R) -> RegenerationStream {
    let initial = crate::models::sample_bm_cycle_duration(rng);
    let mut covered = initial;
    let mut durations = Vec::new();
    while covered < horizon {
        let d = crate::models::sample_bm_cycle_duration(rng);
        covered += d;
        durations.push(d);
    }
    RegenerationStream::from_durations(initial, durations)
}

#[allow(clippy::too_many_arguments)]
pub fn retrospective_regeneration<R: Rng>(
    model: &CtmcModel,
    cert: &MinorizationCert,
    kernel: &ResolventKernel,
    x0: usize,
    n_cycles: usize,
    observables: &[ObservableSpec],
    rng: &mut R,
) -> Result<RegenerationStream> {
    retrospective_engine(
        model,
        cert,
        kernel,
        StartLaw::State(x0),
        CycleTarget::Cycles(n_cycles),
        observables,
        false,
        rng,
    )
}

/// Integral of the observable up to the first regeneration, started at x.
/// Used for C(f) estimation.
pub fn first_cycle_integral<R: Rng>(
    model: &CtmcModel,
    cert: &MinorizationCert,
    kernel: &ResolventKernel,
    x0: usize,
    observable: &ObservableSpec,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let stream = retrospective_engine(
        model,
        cert,
        kernel,
        StartLaw::State(x0),
        CycleTarget::FirstRegeneration,
        std::slice::from_ref(observable),
        false,
        rng,
    )?;
    Ok((stream.initial.xi[0], stream.initial.duration))
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Write cycles as CSV: cycle_index, duration, start_state, xi_<name>...
/// Cycle 1 is the initial segment; stationary cycles start at index 2.
pub fn write_cycles_csv<W: Write>(stream: &RegenerationStream, mut w: W) -> Result<()> {
    let mut header = String::from("cycle_index,duration,start_state");
    for name in &stream.observable_names {
        header.push_str(",xi_");
        header.push_str(name);
    }
    writeln!(w, "{header}")?;
    let write_row = |w: &mut W, rec: &RegenerationRecord, start: Option<usize>| -> Result<()> {
        let start_txt = start.map_or(String::new(), |s| s.to_string());
        let mut line = format!("{},{},{}", rec.index, rec.duration, start_txt);
        for v in &rec.xi {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
        Ok(())
    };
    write_row(&mut w, &stream.initial, None)?;
    for (i, rec) in stream.records.iter().enumerate() {
        let start = stream.start_states.as_ref().and_then(|s| s.get(i).copied());
        write_row(&mut w, rec, start)?;
    }
    Ok(())
}

pub fn write_cycles_csv_path(stream: &RegenerationStream, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_cycles_csv(stream, std::io::BufWriter::new(file))
}

/// Read a cycles CSV written by `write_cycles_csv`.
pub fn read_cycles_csv(path: &Path) -> Result<RegenerationStream> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let obs_names: Vec<String> = headers
        .iter()
        .skip(3)
        .map(|h| h.trim_start_matches("xi_").to_string())
        .collect();
    let mut initial: Option<RegenerationRecord> = None;
    let mut records = Vec::new();
    let mut start_states = Vec::new();
    let mut have_starts = true;
    for row in rdr.records() {
        let row = row?;
        let index: u64 = row[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad cycle_index '{}'", &row[0])))?;
        let duration: f64 = row[1]
            .parse()
            .map_err(|_| Error::Config(format!("bad duration '{}'", &row[1])))?;
        let start: Option<usize> = row[2].parse().ok();
        let xi: Vec<f64> = (3..row.len())
            .map(|i| {
                row[i]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad xi value '{}'", &row[i])))
            })
            .collect::<Result<_>>()?;
        let rec = RegenerationRecord {
            index,
            duration,
            xi,
        };
        if index == 1 {
            initial = Some(rec);
        } else {
            match start {
                Some(s) => start_states.push(s),
                None => have_starts = false,
            }
            records.push(rec);
        }
    }
    Ok(RegenerationStream {
        initial: initial.ok_or_else(|| Error::Config("cycles.csv has no initial cycle".into()))?,
        records,
        clock_times: None,
        start_states: if have_starts && !start_states.is_empty() {
            Some(start_states)
        } else {
            None
        },
        jump_uniforms: None,
        discarded: 0,
        observable_names: obs_names,
    })
}
