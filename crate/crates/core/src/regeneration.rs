//! From cycle streams to estimated quantities: the per-cycle increments
//! xi_n, the regeneration counts N_t and the deterministic equivalent
//! v*_t = E_nu(N_t) + 1, the cycle-length Laplace transform, the constants
//! C(f), K(f) = ||f|| + C(f), B(f) = max(K^2, K), and the Kac-type ratio
//! identity Sum xi(f) / Sum xi(g) -> mu(f)/mu(g).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{diffusion_first_cycle, CtmcModel, Diffusion1D};
use crate::resolvent::{stationary_measure, StationaryMeasure};
use crate::splitting::{first_cycle_integral, MinorizationCert, RegenerationStream};
use crate::stats::{mean_and_se, Estimate};

pub use crate::splitting::RegenerationRecord;

// ---------------------------------------------------------------------------
// Observables
// ---------------------------------------------------------------------------

/// Where an observable lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Support {
    AllStates,
    States(Vec<usize>),
    Interval(f64, f64),
}

/// Evaluation rule of an observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObservableKind {
    Zero,
    /// Per-state values for finite chains.
    StateTable(Vec<f64>),
    /// Odd tent: x on [-1,1], sign(x)(2-|x|) on 1<|x|<=2, zero outside.
    /// Bounded by 1, compactly supported, Lebesgue integral zero.
    OddTent,
    /// Indicator of [lo, hi].
    Band { lo: f64, hi: f64 },
    Abs(Box<ObservableKind>),
    Scaled { base: Box<ObservableKind>, factor: f64 },
}

impl ObservableKind {
    fn eval_pos(&self, x: f64) -> f64 {
        match self {
            ObservableKind::Zero => 0.0,
            ObservableKind::StateTable(_) => f64::NAN,
            ObservableKind::OddTent => {
                let a = x.abs();
                if a <= 1.0 {
                    x
                } else if a <= 2.0 {
                    x.signum() * (2.0 - a)
                } else {
                    0.0
                }
            }
            ObservableKind::Band { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0
                } else {
                    0.0
                }
            }
            ObservableKind::Abs(base) => base.eval_pos(x).abs(),
            ObservableKind::Scaled { base, factor } => factor * base.eval_pos(x),
        }
    }

    fn eval_state(&self, i: usize) -> Option<f64> {
        match self {
            ObservableKind::Zero => Some(0.0),
            ObservableKind::StateTable(v) => v.get(i).copied(),
            ObservableKind::Abs(base) => base.eval_state(i).map(f64::abs),
            ObservableKind::Scaled { base, factor } => base.eval_state(i).map(|v| factor * v),
            _ => None,
        }
    }

    fn is_positional(&self) -> bool {
        match self {
            ObservableKind::Zero => true,
            ObservableKind::StateTable(_) => false,
            ObservableKind::OddTent | ObservableKind::Band { .. } => true,
            ObservableKind::Abs(base) | ObservableKind::Scaled { base, .. } => {
                base.is_positional()
            }
        }
    }
}

/// A bounded observable with centering data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub name: String,
    pub kind: ObservableKind,
    pub sup_norm: f64,
    pub centered: bool,
    pub support: Support,
}

impl ObservableSpec {
    pub fn zero() -> Self {
        Self {
            name: "zero".into(),
            kind: ObservableKind::Zero,
            sup_norm: 0.0,
            centered: true,
            support: Support::AllStates,
        }
    }

    /// Indicator of a single state.
    pub fn state_indicator(name: &str, n_states: usize, state: usize) -> Result<Self> {
        if state >= n_states {
            return Err(Error::InvalidObservable(format!("state {state} out of range")));
        }
        let mut values = vec![0.0; n_states];
        values[state] = 1.0;
        Ok(Self {
            name: name.into(),
            kind: ObservableKind::StateTable(values),
            sup_norm: 1.0,
            centered: false,
            support: Support::States(vec![state]),
        })
    }

    /// Indicator of a state minus its exact stationary mass; mu(f) = 0.
    pub fn centered_indicator(
        name: &str,
        state: usize,
        stationary: &StationaryMeasure,
    ) -> Result<Self> {
        let n = stationary.weights().len();
        if state >= n {
            return Err(Error::InvalidObservable(format!("state {state} out of range")));
        }
        let p = stationary.weights()[state];
        let values: Vec<f64> = (0..n)
            .map(|i| if i == state { 1.0 - p } else { -p })
            .collect();
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self {
            name: name.into(),
            kind: ObservableKind::StateTable(values),
            sup_norm: sup,
            centered: true,
            support: Support::AllStates,
        })
    }

    pub fn from_table(name: &str, values: Vec<f64>, centered: bool) -> Self {
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            name: name.into(),
            kind: ObservableKind::StateTable(values),
            sup_norm: sup,
            centered,
            support: Support::AllStates,
        }
    }

    /// The odd tent for diffusion examples: compactly supported, bounded by
    /// one, Lebesgue integral zero by oddness.
    pub fn odd_tent(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: ObservableKind::OddTent,
            sup_norm: 1.0,
            centered: true,
            support: Support::Interval(-2.0, 2.0),
        }
    }

    pub fn band(name: &str, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidObservable("band needs lo < hi".into()));
        }
        Ok(Self {
            name: name.into(),
            kind: ObservableKind::Band { lo, hi },
            sup_norm: 1.0,
            centered: false,
            support: Support::Interval(lo, hi),
        })
    }

    /// |f| companion (same name with a prefix); never centered.
    pub fn abs(&self) -> Self {
        Self {
            name: format!("abs_{}", self.name),
            kind: ObservableKind::Abs(Box::new(self.kind.clone())),
            sup_norm: self.sup_norm,
            centered: false,
            support: self.support.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            name: format!("{}_x{}", self.name, factor),
            kind: ObservableKind::Scaled {
                base: Box::new(self.kind.clone()),
                factor,
            },
            sup_norm: self.sup_norm * factor.abs(),
            centered: self.centered,
            support: self.support.clone(),
        }
    }

    pub fn eval_position(&self, x: f64) -> f64 {
        self.kind.eval_pos(x)
    }

    pub fn is_positional(&self) -> bool {
        self.kind.is_positional()
    }

    /// Per-state value table for a finite chain.
    pub fn state_table(&self, model: &CtmcModel) -> Result<Vec<f64>> {
        let n = model.n_states();
        (0..n)
            .map(|i| {
                self.kind.eval_state(i).ok_or_else(|| {
                    Error::InvalidObservable(format!(
                        "observable '{}' is position-valued, not usable on a finite chain",
                        self.name
                    ))
                })
            })
            .collect()
    }

    /// Exhaustive invariant check on a finite chain: |f| <= sup_norm
    /// everywhere and, when flagged centered, mu(f) = 0 within 1e-12.
    pub fn validate_for_ctmc(&self, model: &CtmcModel) -> Result<()> {
        let table = self.state_table(model)?;
        for (i, v) in table.iter().enumerate() {
            if v.abs() > self.sup_norm + 1e-15 {
                return Err(Error::InvalidObservable(format!(
                    "|f({i})| = {} exceeds sup_norm {}",
                    v.abs(),
                    self.sup_norm
                )));
            }
        }
        if self.centered {
            let pi = stationary_measure(model)?;
            let mu_f = pi.integrate(&table);
            if mu_f.abs() > 1e-12 {
                return Err(Error::InvalidObservable(format!(
                    "observable '{}' flagged centered but mu(f) = {mu_f}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Sampled invariant check on an interval plus analytic centering for the
    /// built-in diffusion forms.
    pub fn validate_for_diffusion(&self, lo: f64, hi: f64) -> Result<()> {
        if !self.is_positional() {
            return Err(Error::InvalidObservable(format!(
                "observable '{}' is state-valued, not usable on a diffusion",
                self.name
            )));
        }
        let grid = 2001;
        for k in 0..grid {
            let x = lo + (hi - lo) * k as f64 / (grid - 1) as f64;
            if self.eval_position(x).abs() > self.sup_norm + 1e-12 {
                return Err(Error::InvalidObservable(format!(
                    "|f({x})| exceeds sup_norm {}",
                    self.sup_norm
                )));
            }
        }
        if self.centered && !self.lebesgue_integral_is_zero() {
            return Err(Error::InvalidObservable(format!(
                "observable '{}' flagged centered but its Lebesgue integral is nonzero",
                self.name
            )));
        }
        Ok(())
    }

    fn lebesgue_integral_is_zero(&self) -> bool {
        fn integral(kind: &ObservableKind) -> Option<f64> {
            match kind {
                ObservableKind::Zero => Some(0.0),
                ObservableKind::OddTent => Some(0.0),
                ObservableKind::Band { lo, hi } => Some(hi - lo),
                ObservableKind::Scaled { base, factor } => integral(base).map(|v| factor * v),
                ObservableKind::Abs(_) | ObservableKind::StateTable(_) => None,
            }
        }
        matches!(integral(&self.kind), Some(v) if v.abs() < 1e-12)
    }
}

/// Loadable observable definition for configs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableConfig {
    Zero,
    StateIndicator {
        state: usize,
        #[serde(default)]
        centered: bool,
    },
    Table {
        values: Vec<f64>,
        #[serde(default)]
        centered: bool,
    },
    OddTent,
    Band { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NamedObservable {
    pub name: String,
    #[serde(flatten)]
    pub config: ObservableConfig,
}

impl NamedObservable {
    pub fn resolve(&self, model: Option<&CtmcModel>) -> Result<ObservableSpec> {
        match &self.config {
            ObservableConfig::Zero => Ok(ObservableSpec {
                name: self.name.clone(),
                ..ObservableSpec::zero()
            }),
            ObservableConfig::StateIndicator { state, centered } => {
                let model = model.ok_or_else(|| {
                    Error::Config("state observable needs a finite-chain model".into())
                })?;
                let spec = if *centered {
                    let pi = stationary_measure(model)?;
                    ObservableSpec::centered_indicator(&self.name, *state, &pi)?
                } else {
                    ObservableSpec::state_indicator(&self.name, model.n_states(), *state)?
                };
                spec.validate_for_ctmc(model)?;
                Ok(spec)
            }
            ObservableConfig::Table { values, centered } => {
                let spec = ObservableSpec::from_table(&self.name, values.clone(), *centered);
                if let Some(m) = model {
                    spec.validate_for_ctmc(m)?;
                }
                Ok(spec)
            }
            ObservableConfig::OddTent => {
                let mut spec = ObservableSpec::odd_tent(&self.name);
                spec.name = self.name.clone();
                Ok(spec)
            }
            ObservableConfig::Band { lo, hi } => ObservableSpec::band(&self.name, *lo, *hi),
        }
    }
}

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

/// One row of the C(f) estimation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfRow {
    pub start: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub truncated: u64,
}

/// C(f) estimate: per-start Monte Carlo means plus the conservative upper
/// value max_x (mean + 2 stderr). Theorem bounds need an upper bound on K(f);
/// an underestimate would spuriously fail domination tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfEstimate {
    pub c_f: Estimate,
    pub table: Vec<CfRow>,
}

fn cf_from_table(table: Vec<CfRow>) -> CfEstimate {
    let mut best = Estimate::new(0.0, 0.0);
    let mut best_val = f64::NEG_INFINITY;
    for row in &table {
        let upper = row.mean + 2.0 * row.stderr;
        if upper > best_val {
            best_val = upper;
            best = Estimate::new(upper, row.stderr);
        }
    }
    CfEstimate {
        c_f: Estimate::new(best_val.max(0.0), best.stderr),
        table,
    }
}

/// Monte Carlo estimate of C(f) = sup_x E_x of the |f|-integral up to the
/// first regeneration, exhaustively over the start states of a finite chain.
pub fn estimate_cf_ctmc<R: Rng>(
    model: &CtmcModel,
    cert: &MinorizationCert,
    kernel: &crate::resolvent::ResolventKernel,
    f: &ObservableSpec,
    n_per_state: usize,
    rng: &mut R,
) -> Result<CfEstimate> {
    if n_per_state < 2 {
        return Err(Error::InvalidQuery("n_per_state must be >= 2".into()));
    }
    let abs_f = f.abs();
    let mut table = Vec::with_capacity(model.n_states());
    for x in 0..model.n_states() {
        let mut vals = Vec::with_capacity(n_per_state);
        for _ in 0..n_per_state {
            let (integral, _r1) = first_cycle_integral(model, cert, kernel, x, &abs_f, rng)?;
            vals.push(integral);
        }
        let est = mean_and_se(&vals);
        table.push(CfRow {
            start: model.label(x).to_string(),
            mean: est.value,
            stderr: est.stderr,
            n: n_per_state,
            truncated: 0,
        });
    }
    Ok(cf_from_table(table))
}

/// Number of start points used for diffusion C(f) estimation.
pub const CF_DIFFUSION_GRID: usize = 21;

/// C(f) for a diffusion: start-state grid spanning the support of f and the
/// regeneration interval. Truncated cycles keep their partial integral, so
/// the estimate is a grid/truncation lower bound with a +2se safety margin.
pub fn estimate_cf_diffusion<R: Rng>(
    model: &Diffusion1D,
    f: &ObservableSpec,
    n_per_start: usize,
    rng: &mut R,
) -> Result<CfEstimate> {
    if n_per_start < 2 {
        return Err(Error::InvalidQuery("n_per_start must be >= 2".into()));
    }
    let (mut lo, mut hi) = match f.support {
        Support::Interval(a, b) => (a, b),
        _ => (model.regen_low, model.regen_high),
    };
    lo = lo.min(model.regen_low);
    hi = hi.max(model.regen_high);
    let abs_f = f.abs();
    let mut table = Vec::with_capacity(CF_DIFFUSION_GRID);
    for k in 0..CF_DIFFUSION_GRID {
        let x = lo + (hi - lo) * k as f64 / (CF_DIFFUSION_GRID - 1) as f64;
        let mut vals = Vec::with_capacity(n_per_start);
        let mut truncated = 0u64;
        for _ in 0..n_per_start {
            let (integral, _dur, trunc) = diffusion_first_cycle(model, &abs_f, x, rng);
            if trunc {
                truncated += 1;
            }
            vals.push(integral);
        }
        let est = mean_and_se(&vals);
        table.push(CfRow {
            start: format!("{x}"),
            mean: est.value,
            stderr: est.stderr,
            n: n_per_start,
            truncated,
        });
    }
    Ok(cf_from_table(table))
}

/// A Laplace-transform table row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplacePoint {
    pub lambda: f64,
    pub value: f64,
    pub stderr: f64,
}

/// A v*_t table row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VstarPoint {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Estimated constants of the bound calculus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantEstimates {
    pub sup_norm: f64,
    pub c_f: Estimate,
    pub k_f: f64,
    pub b_f: f64,
    pub m_hat: Estimate,
    #[serde(default)]
    pub vstar: Vec<VstarPoint>,
    #[serde(default)]
    pub laplace: Vec<LaplacePoint>,
}

impl ConstantEstimates {
    pub fn vstar_at(&self, t: f64) -> Option<Estimate> {
        self.vstar
            .iter()
            .find(|p| p.t == t)
            .map(|p| Estimate::new(p.value, p.stderr))
    }
}

/// K(f) = ||f|| + C(f) and B(f) = max(K^2, K) from cycle data; m from the
/// stationary cycle durations (cycles 2..N).
pub fn constants_from_cycles(
    stream: &RegenerationStream,
    f: &ObservableSpec,
    c_f: Estimate,
) -> Result<ConstantEstimates> {
    if stream.records.len() < 100 {
        return Err(Error::InsufficientData(format!(
            "need at least 100 stationary cycles, got {}",
            stream.records.len()
        )));
    }
    if c_f.value < 0.0 {
        return Err(Error::InvalidQuery("C(f) must be nonnegative".into()));
    }
    let durations = stream.durations();
    let m_hat = mean_and_se(&durations);
    let k_f = f.sup_norm + c_f.value;
    let b_f = (k_f * k_f).max(k_f);
    Ok(ConstantEstimates {
        sup_norm: f.sup_norm,
        c_f,
        k_f,
        b_f,
        m_hat,
        vstar: Vec::new(),
        laplace: Vec::new(),
    })
}

/// Sample mean of e^{-lambda (R_2 - R_1)} over stationary cycles.
pub fn empirical_laplace(stream: &RegenerationStream, lambda: f64) -> Result<Estimate> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidQuery("lambda must be >= 0".into()));
    }
    if stream.records.is_empty() {
        return Err(Error::InsufficientData("no stationary cycles".into()));
    }
    let vals: Vec<f64> = stream
        .records
        .iter()
        .map(|r| (-lambda * r.duration).exp())
        .collect();
    Ok(mean_and_se(&vals))
}

/// Fill a Laplace table on a lambda grid.
pub fn laplace_table(stream: &RegenerationStream, lambdas: &[f64]) -> Result<Vec<LaplacePoint>> {
    lambdas
        .iter()
        .map(|&l| {
            let e = empirical_laplace(stream, l)?;
            Ok(LaplacePoint {
                lambda: l,
                value: e.value,
                stderr: e.stderr,
            })
        })
        .collect()
}

/// Per-t regeneration counts across replications.
#[derive(Debug, Clone)]
pub struct NtSamples {
    pub t_grid: Vec<f64>,
    /// counts[i][r] = N_{t_i} in replication r.
    pub counts: Vec<Vec<u64>>,
    /// v*_t = mean(N_t) + 1 with the standard error of the mean.
    pub vstar: Vec<Estimate>,
}

impl NtSamples {
    pub fn from_counts(t_grid: Vec<f64>, counts: Vec<Vec<u64>>) -> Self {
        let vstar = counts
            .iter()
            .map(|c| {
                let vals: Vec<f64> = c.iter().map(|&n| n as f64).collect();
                let e = mean_and_se(&vals);
                Estimate::new(e.value + 1.0, e.stderr)
            })
            .collect();
        Self {
            t_grid,
            counts,
            vstar,
        }
    }

    pub fn vstar_points(&self) -> Vec<VstarPoint> {
        self.t_grid
            .iter()
            .zip(&self.vstar)
            .map(|(&t, e)| VstarPoint {
                t,
                value: e.value,
                stderr: e.stderr,
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,replication,n_t")?;
        for (i, &t) in self.t_grid.iter().enumerate() {
            for (r, n) in self.counts[i].iter().enumerate() {
                writeln!(w, "{t},{r},{n}")?;
            }
        }
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let mut t_grid: Vec<f64> = Vec::new();
        let mut counts: Vec<Vec<u64>> = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let t: f64 = row[0]
                .parse()
                .map_err(|_| Error::Config(format!("bad t '{}'", &row[0])))?;
            let n: u64 = row[2]
                .parse()
                .map_err(|_| Error::Config(format!("bad n_t '{}'", &row[2])))?;
            match t_grid.last() {
                Some(&last) if last == t => counts.last_mut().unwrap().push(n),
                _ => {
                    t_grid.push(t);
                    counts.push(vec![n]);
                }
            }
        }
        if t_grid.is_empty() {
            return Err(Error::Config("nt.csv is empty".into()));
        }
        Ok(Self::from_counts(t_grid, counts))
    }
}

/// Count partial-sum crossings of the regeneration times per replication and
/// estimate v*_t = E_nu(N_t) + 1 on the time grid.
pub fn count_regenerations(
    replications: &[RegenerationStream],
    t_grid: &[f64],
) -> Result<NtSamples> {
    if replications.is_empty() || t_grid.is_empty() {
        return Err(Error::InsufficientData("need replications and a t grid".into()));
    }
    if t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidQuery("t_grid must be strictly increasing".into()));
    }
    let t_max = *t_grid.last().unwrap();
    let mut counts = vec![Vec::with_capacity(replications.len()); t_grid.len()];
    for (r, stream) in replications.iter().enumerate() {
        let times = stream.regeneration_times();
        let covered = *times.last().unwrap();
        if covered < t_max {
            return Err(Error::HorizonShortfall {
                replication: r,
                covered,
                required: t_max,
            });
        }
        for (i, &t) in t_grid.iter().enumerate() {
            let n_t = times.partition_point(|&rt| rt <= t) as u64;
            counts[i].push(n_t);
        }
    }
    Ok(NtSamples::from_counts(t_grid.to_vec(), counts))
}

/// Ratio of cycle integrals with a delta-method confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KacRatio {
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_cycles: usize,
    pub confidence: f64,
}

/// (Sum_n xi_n(f)) / (Sum_n xi_n(g)) over stationary cycles; converges to
/// mu(f)/mu(g) by the cycle formula. 99% delta-method interval.
pub fn kac_ratio(stream: &RegenerationStream, f_name: &str, g_name: &str) -> Result<KacRatio> {
    let xf = stream.xi_column(f_name)?;
    let xg = stream.xi_column(g_name)?;
    let n = xf.len();
    if n < 2 {
        return Err(Error::InsufficientData("need at least 2 cycles".into()));
    }
    let sum_g: f64 = xg.iter().sum();
    if sum_g == 0.0 {
        return Err(Error::InvalidQuery(format!(
            "degenerate observable '{g_name}': cycle integrals sum to zero"
        )));
    }
    let mean_f: f64 = xf.iter().sum::<f64>() / n as f64;
    let mean_g = sum_g / n as f64;
    let ratio = mean_f / mean_g;
    // Var(ratio) ~ Var(xi_f - ratio xi_g) / (n mean_g^2).
    let mut s = 0.0;
    for i in 0..n {
        let d = xf[i] - ratio * xg[i];
        s += d * d;
    }
    let var = s / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt() / mean_g.abs();
    let z = 2.5758293035489004; // 99.5th percentile of the standard normal
    Ok(KacRatio {
        ratio,
        ci_low: ratio - z * se,
        ci_high: ratio + z * se,
        n_cycles: n,
        confidence: 0.99,
    })
}

/// Exact per-record invariant: |xi| <= sup_norm * duration.
pub fn validate_xi_bounds(
    stream: &RegenerationStream,
    observables: &[ObservableSpec],
) -> Result<()> {
    for rec in std::iter::once(&stream.initial).chain(stream.records.iter()) {
        for (k, obs) in observables.iter().enumerate() {
            // Accumulation-order rounding allows epsilon-scale slack; a
            // genuine integrator fault would overshoot by whole grid cells.
            let bound = obs.sup_norm * rec.duration * (1.0 + 1e-9) + 1e-9;
            if rec.xi[k].abs() > bound {
                return Err(Error::Numeric(format!(
                    "cycle {}: |xi({})| = {} exceeds sup_norm * duration = {bound}",
                    rec.index,
                    obs.name,
                    rec.xi[k].abs()
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_stream(durations: &[f64]) -> RegenerationStream {
        RegenerationStream::from_durations(1.0, durations.to_vec())
    }

    #[test]
    fn laplace_at_zero_is_exactly_one() {
        let s = synthetic_stream(&[0.5, 1.0, 2.0, 4.0]);
        let e = empirical_laplace(&s, 0.0).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn laplace_is_monotone_in_lambda() {
        let s = synthetic_stream(&[0.5, 1.0, 2.0, 4.0, 0.1, 9.0]);
        let mut prev = f64::INFINITY;
        for &l in &[0.0, 0.1, 0.5, 1.0, 5.0] {
            let v = empirical_laplace(&s, l).unwrap().value;
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn constants_arithmetic() {
        let durations: Vec<f64> = (0..200).map(|i| 1.0 + (i % 3) as f64).collect();
        let s = synthetic_stream(&durations);
        let f = ObservableSpec {
            sup_norm: 1.0,
            ..ObservableSpec::zero()
        };
        let c = constants_from_cycles(&s, &f, Estimate::exact(0.5)).unwrap();
        assert_eq!(c.k_f, 1.5);
        assert_eq!(c.b_f, 2.25);
        let f_small = ObservableSpec {
            sup_norm: 0.3,
            ..ObservableSpec::zero()
        };
        let c = constants_from_cycles(&s, &f_small, Estimate::exact(0.2)).unwrap();
        assert_eq!(c.k_f, 0.5);
        assert_eq!(c.b_f, 0.5); // K < 1 so max picks K
    }

    #[test]
    fn constants_need_enough_cycles() {
        let s = synthetic_stream(&[1.0; 50]);
        let f = ObservableSpec::zero();
        assert!(matches!(
            constants_from_cycles(&s, &f, Estimate::exact(0.0)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn count_regenerations_small_t_gives_vstar_one() {
        let streams: Vec<_> = (0..50).map(|_| synthetic_stream(&[2.0, 2.0, 2.0])).collect();
        // Initial duration 1.0, so R_1 = 1.0 > t = 0.5 and N_t = 0.
        let nt = count_regenerations(&streams, &[0.5]).unwrap();
        assert!(nt.counts[0].iter().all(|&c| c == 0));
        assert_eq!(nt.vstar[0].value, 1.0);
    }

    #[test]
    fn count_regenerations_reports_deficient_replication() {
        let streams = vec![synthetic_stream(&[2.0]), synthetic_stream(&[0.1])];
        let err = count_regenerations(&streams, &[2.5]).unwrap_err();
        match err {
            Error::HorizonShortfall { replication, .. } => assert_eq!(replication, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn vstar_nondecreasing_in_t() {
        let streams: Vec<_> = (0..100)
            .map(|i| synthetic_stream(&vec![0.5 + (i % 5) as f64 * 0.3; 40]))
            .collect();
        let nt = count_regenerations(&streams, &[1.0, 2.0, 4.0, 8.0]).unwrap();
        for w in nt.vstar.windows(2) {
            assert!(w[0].value <= w[1].value);
        }
    }

    #[test]
    fn kac_ratio_of_identical_columns_is_one() {
        let mut s = synthetic_stream(&[1.0, 2.0, 3.0, 4.0]);
        s.observable_names = vec!["f".into(), "g".into()];
        for (i, r) in s.records.iter_mut().enumerate() {
            let v = 0.3 + i as f64;
            r.xi = vec![v, v];
        }
        s.initial.xi = vec![0.0, 0.0];
        let k = kac_ratio(&s, "f", "g").unwrap();
        assert_eq!(k.ratio, 1.0);
    }

    #[test]
    fn kac_ratio_rejects_zero_denominator() {
        let mut s = synthetic_stream(&[1.0, 2.0]);
        s.observable_names = vec!["f".into(), "g".into()];
        for r in s.records.iter_mut() {
            r.xi = vec![1.0, 0.0];
        }
        s.initial.xi = vec![0.0, 0.0];
        assert!(kac_ratio(&s, "f", "g").is_err());
    }

    #[test]
    fn odd_tent_shape() {
        let f = ObservableSpec::odd_tent("f");
        assert_eq!(f.eval_position(0.5), 0.5);
        assert_eq!(f.eval_position(-0.5), -0.5);
        assert_eq!(f.eval_position(1.5), 0.5);
        assert_eq!(f.eval_position(-1.5), -0.5);
        assert_eq!(f.eval_position(2.5), 0.0);
        f.validate_for_diffusion(-3.0, 3.0).unwrap();
    }

    #[test]
    fn centered_indicator_is_centered() {
        let m = crate::models::build_two_state_ctmc(1.0, 3.0).unwrap();
        let pi = crate::resolvent::stationary_measure(&m).unwrap();
        let f = ObservableSpec::centered_indicator("f", 0, &pi).unwrap();
        f.validate_for_ctmc(&m).unwrap();
        let table = f.state_table(&m).unwrap();
        assert!((table[0] - 0.25).abs() < 1e-12);
        assert!((table[1] + 0.75).abs() < 1e-12);
    }

    #[test]
    fn observable_config_round_trip() {
        let named = NamedObservable {
            name: "f0".into(),
            config: ObservableConfig::StateIndicator {
                state: 0,
                centered: true,
            },
        };
        let text = serde_json::to_string(&named).unwrap();
        let back: NamedObservable = serde_json::from_str(&text).unwrap();
        assert_eq!(named, back);
        let m = crate::models::build_two_state_ctmc(1.0, 1.0).unwrap();
        let spec = back.resolve(Some(&m)).unwrap();
        assert!(spec.centered);
    }
}
