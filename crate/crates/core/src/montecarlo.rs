//! Replicated-experiment harness: runs independent simulations of the
//! additive functional A_t = integral of f over [0, t], estimates tail
//! probabilities with exact binomial intervals, and builds deviation curves
//! against the theorem bounds.
//!
//! Replication r draws its random stream deterministically from
//! (master_seed, r, tag): identical configs give bit-identical outputs, on
//! any worker count.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    deviation_threshold, evaluate_bound, BoundQuery, BoundRegime, LaplaceTransform,
};
use crate::error::{Error, Result};
use crate::models::{BuiltModel, CtmcModel, Diffusion1D, ModelSpec};
use crate::regeneration::{ConstantEstimates, NamedObservable, ObservableSpec};
use crate::splitting::MinorizationCert;
use crate::stats::clopper_pearson;
use crate::streams::derive_stream;

/// Cycle-generation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Forward,
    Retrospective,
    /// Hitting-time regeneration (diffusions and exact Brownian cycles).
    Hitting,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Forward => write!(f, "forward"),
            Method::Retrospective => write!(f, "retrospective"),
            Method::Hitting => write!(f, "hitting"),
        }
    }
}

/// Deliberate fault injections for negative-control runs.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct FaultSpec {
    #[serde(default)]
    pub splice_cycles: bool,
    #[serde(default)]
    pub bound_divisor: Option<f64>,
    #[serde(default)]
    pub halve_kf: bool,
}

impl FaultSpec {
    pub fn any(&self) -> bool {
        self.splice_cycles || self.bound_divisor.is_some() || self.halve_kf
    }
}

fn default_schema_version() -> u32 {
    1
}
fn default_n_cycles() -> usize {
    20_000
}
fn default_cf_samples() -> usize {
    2_000
}
fn default_nt_replications() -> usize {
    2_000
}

/// A full experiment definition, loadable from TOML (primary) or JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub master_seed: u64,
    pub replications: usize,
    pub method: Method,
    pub regime: BoundRegime,
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    #[serde(default)]
    pub eta_dev: Option<f64>,
    #[serde(default)]
    pub alpha_reg: Option<f64>,
    #[serde(default)]
    pub l_t: Option<f64>,
    #[serde(default = "default_n_cycles")]
    pub n_cycles: usize,
    #[serde(default = "default_cf_samples")]
    pub cf_samples: usize,
    #[serde(default = "default_nt_replications")]
    pub nt_replications: usize,
    /// Expected tail index for the heavy-tail check (regular models).
    #[serde(default)]
    pub tail_alpha: Option<f64>,
    /// Small set for the minorization certificate; defaults to all states.
    #[serde(default)]
    pub small_set: Option<Vec<usize>>,
    /// Inline model definition. Exactly one of `model` / `model_path`.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// Path to a JSON model document, relative to the config file.
    #[serde(default)]
    pub model_path: Option<String>,
    pub observable: NamedObservable,
    #[serde(default)]
    pub faults: Option<FaultSpec>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1_000 {
            return Err(Error::Config(
                "tail estimation needs at least 1000 replications".into(),
            ));
        }
        if self.t_grid.is_empty() || self.x_grid.is_empty() {
            return Err(Error::Config("t_grid and x_grid must be nonempty".into()));
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1])
            || self.x_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config("grids must be strictly increasing".into()));
        }
        if self.n_cycles < 2 {
            return Err(Error::Config("n_cycles must be >= 2".into()));
        }
        match (&self.model, &self.model_path) {
            (None, None) => {
                return Err(Error::Config("config needs `model` or `model_path`".into()))
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "config must set only one of `model` / `model_path`".into(),
                ))
            }
            _ => {}
        }
        if let Some(spec) = &self.model {
            match (spec, self.method) {
                (ModelSpec::Ctmc { .. } | ModelSpec::Spinflip { .. }, Method::Hitting) => {
                    return Err(Error::Config(
                        "hitting method applies to diffusion/bm models only".into(),
                    ));
                }
                (ModelSpec::Diffusion1d { .. } | ModelSpec::Bm {}, m)
                    if m != Method::Hitting =>
                {
                    return Err(Error::Config(
                        "diffusion/bm models regenerate by hitting times; set method = \"hitting\""
                            .into(),
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// The inline model definition; call `normalize` first when a
    /// `model_path` may be present.
    pub fn model_spec(&self) -> Result<&ModelSpec> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Config("config has no inline model; normalize it first".into()))
    }

    /// Resolve `model_path` (relative to `base_dir`) into an inline model so
    /// the config becomes self-contained and hashable.
    pub fn normalize(&self, base_dir: &Path) -> Result<ExperimentConfig> {
        let mut cfg = self.clone();
        if let Some(rel) = cfg.model_path.take() {
            let path = base_dir.join(&rel);
            let text = std::fs::read_to_string(&path).map_err(|e| {
                Error::Config(format!("cannot read model file '{}': {e}", path.display()))
            })?;
            cfg.model = Some(ModelSpec::from_json(&text)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse from TOML or JSON depending on the leading character.
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        let cfg: ExperimentConfig = if trimmed.starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(Error::Toml)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config '{}': {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Canonical JSON used for hashing and for the self-describing run dir.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json().as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Replicated samples of A_t per grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplesTable {
    pub t_grid: Vec<f64>,
    /// samples[i][r] = A_{t_i} in replication r.
    pub samples: Vec<Vec<f64>>,
}

const REPLICATION_TAG: &str = "replication";

/// Exact path integral of f along a CTMC trajectory, recorded at the grid
/// checkpoints.
fn ctmc_additive_path<R: Rng>(
    model: &CtmcModel,
    table: &[f64],
    start: usize,
    t_grid: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(t_grid.len());
    let mut t = 0.0;
    let mut x = start;
    let mut acc = 0.0;
    let mut gi = 0;
    while gi < t_grid.len() {
        let rate = model.exit_rate(x);
        let t_jump = t + rng.sample::<f64, _>(Exp1) / rate;
        while gi < t_grid.len() && t_grid[gi] <= t_jump {
            out.push(acc + table[x] * (t_grid[gi] - t));
            gi += 1;
        }
        if gi == t_grid.len() {
            break;
        }
        acc += table[x] * (t_jump - t);
        t = t_jump;
        x = crate::models::sample_next_state(model, x, rng);
    }
    out
}

/// Trapezoid integral of f along an Euler path of the diffusion.
fn diffusion_additive_path<R: Rng>(
    model: &Diffusion1D,
    f: &ObservableSpec,
    start: f64,
    t_grid: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let dt = model.step;
    let sqrt_dt = dt.sqrt();
    let mut out = Vec::with_capacity(t_grid.len());
    let mut x = start;
    let mut fx = f.eval_position(x);
    let mut acc = 0.0;
    let mut t = 0.0;
    let mut gi = 0;
    while gi < t_grid.len() {
        let z: f64 = rng.sample(StandardNormal);
        let x_new = x + model.drift.eval(x) * dt + model.sigma * sqrt_dt * z;
        let f_new = f.eval_position(x_new);
        let slab = 0.5 * (fx + f_new);
        let t_new = t + dt;
        while gi < t_grid.len() && t_grid[gi] <= t_new {
            out.push(acc + slab * (t_grid[gi] - t));
            gi += 1;
        }
        acc += slab * dt;
        t = t_new;
        x = x_new;
        fx = f_new;
    }
    out
}

/// Run all replications of A_t = integral of f over [0, t] for each grid t.
/// CTMC paths are integrated exactly; diffusions use the trapezoid rule on
/// the Euler grid. The chain starts from nu (CTMC) or the lower regeneration
/// level (diffusions).
pub fn run_replications(
    cfg: &ExperimentConfig,
    cert: Option<&MinorizationCert>,
) -> Result<SamplesTable> {
    cfg.validate()?;
    let built = cfg.model_spec()?.build()?;
    let per_rep: Vec<Vec<f64>> = match &built {
        BuiltModel::Ctmc(model) => {
            let cert = cert.ok_or_else(|| {
                Error::Config("CTMC replications need a minorization certificate".into())
            })?;
            let f = cfg.observable.resolve(Some(model))?;
            let table = f.state_table(model)?;
            (0..cfg.replications)
                .into_par_iter()
                .map(|r| {
                    let mut rng = derive_stream(cfg.master_seed, r as u64, REPLICATION_TAG);
                    let start = cert.sample_nu(&mut rng);
                    ctmc_additive_path(model, &table, start, &cfg.t_grid, &mut rng)
                })
                .collect()
        }
        BuiltModel::Diffusion(model) => {
            let f = cfg.observable.resolve(None)?;
            f.validate_for_diffusion(model.regen_low - 5.0, model.regen_high + 5.0)?;
            (0..cfg.replications)
                .into_par_iter()
                .map(|r| {
                    let mut rng = derive_stream(cfg.master_seed, r as u64, REPLICATION_TAG);
                    diffusion_additive_path(model, &f, model.regen_low, &cfg.t_grid, &mut rng)
                })
                .collect()
        }
        BuiltModel::BrownianExact => {
            let f = cfg.observable.resolve(None)?;
            if f.sup_norm > 0.0 {
                return Err(Error::Config(
                    "the exact Brownian model samples durations only; use a diffusion1d model for path functionals".into(),
                ));
            }
            vec![vec![0.0; cfg.t_grid.len()]; cfg.replications]
        }
    };
    let mut samples = vec![Vec::with_capacity(cfg.replications); cfg.t_grid.len()];
    for rep in &per_rep {
        for (i, v) in rep.iter().enumerate() {
            samples[i].push(*v);
        }
    }
    Ok(SamplesTable {
        t_grid: cfg.t_grid.clone(),
        samples,
    })
}

/// Two-sided tail estimate: fraction of samples with |A| >= threshold plus
/// the exact binomial (Clopper-Pearson) 99% interval.
pub fn tail_probability(samples: &[f64], threshold: f64) -> Result<(f64, f64, f64)> {
    if samples.len() < 1_000 {
        return Err(Error::InsufficientData(format!(
            "tail estimation needs >= 1000 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as u64;
    let k = samples.iter().filter(|s| s.abs() >= threshold).count() as u64;
    let (lo, hi) = clopper_pearson(k, n, 0.99)?;
    Ok((k as f64 / n as f64, lo, hi))
}

/// One deviation-curve row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveRow {
    pub regime: String,
    pub t: f64,
    pub x: f64,
    pub eta: f64,
    pub threshold: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub gaussian_term: f64,
    pub exponential_term: f64,
    pub clock_term: f64,
    pub bound_total: f64,
    pub vacuous: bool,
    pub dominated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationCurve {
    pub rows: Vec<CurveRow>,
}

/// Build the empirical-vs-bound table over the (t, x) grid. The threshold is
/// the regime's display scaling; the bound comes from `evaluate_bound`. A
/// configured bound divisor (fault injection) rescales the bound before the
/// domination flag is set.
pub fn deviation_curve(
    cfg: &ExperimentConfig,
    table: &SamplesTable,
    constants: &ConstantEstimates,
    transform: &LaplaceTransform,
) -> Result<DeviationCurve> {
    let divisor = cfg
        .faults
        .as_ref()
        .and_then(|f| f.bound_divisor)
        .unwrap_or(1.0);
    if !(divisor > 0.0) {
        return Err(Error::Config("bound divisor must be positive".into()));
    }
    let mut rows = Vec::with_capacity(table.t_grid.len() * cfg.x_grid.len());
    for (i, &t) in table.t_grid.iter().enumerate() {
        for &x in &cfg.x_grid {
            let q = BoundQuery {
                regime: cfg.regime,
                t,
                x,
                eta_dev: cfg.eta_dev,
                alpha_reg: cfg.alpha_reg,
                l_t: cfg.l_t,
            };
            let threshold = deviation_threshold(&q, constants)?;
            let (p_hat, ci_low, ci_high) = tail_probability(&table.samples[i], threshold)?;
            let b = evaluate_bound(&q, constants, transform)?;
            let total = b.total / divisor;
            let vacuous = total >= 1.0;
            rows.push(CurveRow {
                regime: cfg.regime.to_string(),
                t,
                x,
                eta: cfg.eta_dev.unwrap_or(0.0),
                threshold,
                p_hat,
                ci_low,
                ci_high,
                gaussian_term: b.gaussian_term / divisor,
                exponential_term: b.exponential_term / divisor,
                clock_term: b.clock_term / divisor,
                bound_total: total,
                vacuous,
                dominated: vacuous || ci_high <= total,
            });
        }
    }
    Ok(DeviationCurve { rows })
}

// ---------------------------------------------------------------------------
// File output
// ---------------------------------------------------------------------------

pub fn write_samples_csv<W: Write>(table: &SamplesTable, mut w: W) -> Result<()> {
    writeln!(w, "t,replication,a_t")?;
    for (i, &t) in table.t_grid.iter().enumerate() {
        for (r, v) in table.samples[i].iter().enumerate() {
            writeln!(w, "{t},{r},{v}")?;
        }
    }
    Ok(())
}

pub fn read_samples_csv(path: &Path) -> Result<SamplesTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut t_grid: Vec<f64> = Vec::new();
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let t: f64 = row[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad t '{}'", &row[0])))?;
        let v: f64 = row[2]
            .parse()
            .map_err(|_| Error::Config(format!("bad a_t '{}'", &row[2])))?;
        match t_grid.last() {
            Some(&last) if last == t => samples.last_mut().unwrap().push(v),
            _ => {
                t_grid.push(t);
                samples.push(vec![v]);
            }
        }
    }
    if t_grid.is_empty() {
        return Err(Error::Config("samples.csv is empty".into()));
    }
    Ok(SamplesTable { t_grid, samples })
}

pub fn write_curve_csv<W: Write>(curve: &DeviationCurve, mut w: W) -> Result<()> {
    writeln!(
        w,
        "regime,t,x,eta,threshold,p_hat,ci_low,ci_high,gaussian_term,exponential_term,clock_term,bound_total,vacuous,dominated"
    )?;
    for r in &curve.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.regime,
            r.t,
            r.x,
            r.eta,
            r.threshold,
            r.p_hat,
            r.ci_low,
            r.ci_high,
            r.gaussian_term,
            r.exponential_term,
            r.clock_term,
            r.bound_total,
            r.vacuous,
            r.dominated
        )?;
    }
    Ok(())
}

pub fn read_curve_csv(path: &Path) -> Result<DeviationCurve> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| Error::Config(format!("bad curve field '{}'", &row[i])))
        };
        rows.push(CurveRow {
            regime: row[0].to_string(),
            t: f(1)?,
            x: f(2)?,
            eta: f(3)?,
            threshold: f(4)?,
            p_hat: f(5)?,
            ci_low: f(6)?,
            ci_high: f(7)?,
            gaussian_term: f(8)?,
            exponential_term: f(9)?,
            clock_term: f(10)?,
            bound_total: f(11)?,
            vacuous: &row[12] == "true",
            dominated: &row[13] == "true",
        });
    }
    Ok(DeviationCurve { rows })
}

/// Per-t gnuplot slices: `<stem>_t<T>_empirical.dat` holds (x, ci_high) and
/// `<stem>_t<T>_bound.dat` holds (x, bound_total).
pub fn write_gnuplot_slices(curve: &DeviationCurve, dir: &Path, stem: &str) -> Result<Vec<String>> {
    let mut ts: Vec<f64> = curve.rows.iter().map(|r| r.t).collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    let mut written = Vec::new();
    for t in ts {
        for (suffix, pick) in [
            ("empirical", true),
            ("bound", false),
        ] {
            let name = format!("{stem}_t{t}_{suffix}.dat");
            let mut file = std::fs::File::create(dir.join(&name))?;
            for r in curve.rows.iter().filter(|r| r.t == t) {
                let y = if pick { r.ci_high } else { r.bound_total };
                writeln!(file, "{} {}", r.x, y)?;
            }
            written.push(name);
        }
    }
    Ok(written)
}
