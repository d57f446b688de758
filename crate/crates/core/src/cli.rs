//! Batch entry points behind the command-line interface: model loading,
//! experiment dispatch, result persistence and plot-data emission.
//!
//! Exit-code contract: 0 success, 1 check failure, 2 usage/input error.
//! Every output directory is self-describing: the stored config plus the
//! manifest reproduce the run exactly.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::bounds::LaplaceTransform;
use crate::error::{Error, Result};
use crate::models::{sample_bm_cycle_duration, BuiltModel, CtmcModel};
use crate::montecarlo::{
    deviation_curve, read_curve_csv, read_samples_csv, run_replications, write_curve_csv,
    write_gnuplot_slices, write_samples_csv, ExperimentConfig, Method,
};
use crate::regeneration::{
    constants_from_cycles, estimate_cf_ctmc, estimate_cf_diffusion, laplace_table, CfEstimate,
    ConstantEstimates, NtSamples, ObservableSpec,
};
use crate::resolvent::resolvent_kernel;
use crate::splitting::{
    compute_minorization, forward_split_chain, read_cycles_csv, retrospective_engine,
    simulate_until_horizon_bm, write_cycles_csv_path, CycleTarget, ForwardOptions,
    MinorizationCert, RegenerationStream, SplitState, StartLaw,
};
use crate::streams::derive_stream;
use crate::verify::{
    check_bound_domination, check_dependence_structure, check_nt_moments, check_tail_index,
    check_xi_moments, splice_cycles, CheckReport, Thresholds, VerificationReport,
};

/// Records what produced an output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub master_seed: u64,
    pub code_version: String,
    pub created_unix: u64,
    pub wall_time_s: f64,
    pub method: String,
    pub model_hash: String,
    pub small_set: Vec<usize>,
    pub alpha_minor: Option<f64>,
    pub nu: Option<Vec<f64>>,
    pub outputs: Vec<String>,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Output root fallback: --out flag, then HARRIS_REGEN_OUT, then ./runs.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("HARRIS_REGEN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn load_config(config_path: &Path, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    let raw = ExperimentConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let mut cfg = raw.normalize(base)?;
    if let Some(seed) = seed_override {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

struct CtmcContext {
    model: CtmcModel,
    kernel: crate::resolvent::ResolventKernel,
    cert: MinorizationCert,
}

fn ctmc_context(cfg: &ExperimentConfig, model: &CtmcModel) -> Result<CtmcContext> {
    let kernel = resolvent_kernel(model)?;
    let set: Vec<usize> = cfg
        .small_set
        .clone()
        .unwrap_or_else(|| (0..model.n_states()).collect());
    let cert = compute_minorization(&kernel, &set)?;
    Ok(CtmcContext {
        model: model.clone(),
        kernel,
        cert,
    })
}

fn generate_cycles(
    cfg: &ExperimentConfig,
    built: &BuiltModel,
    ctx: Option<&CtmcContext>,
) -> Result<RegenerationStream> {
    let mut rng = derive_stream(cfg.master_seed, 0, "cycles");
    match built {
        BuiltModel::Ctmc(model) => {
            let ctx = ctx.expect("ctmc context prepared");
            let f = cfg.observable.resolve(Some(model))?;
            let observables = vec![f];
            match cfg.method {
                Method::Retrospective => retrospective_engine(
                    model,
                    &ctx.cert,
                    &ctx.kernel,
                    StartLaw::State(0),
                    CycleTarget::Cycles(cfg.n_cycles),
                    &observables,
                    false,
                    &mut rng,
                ),
                Method::Forward => {
                    let z0 = SplitState::sample_initial(&ctx.cert, &ctx.kernel, 0, &mut rng)?;
                    forward_split_chain(
                        model,
                        &ctx.cert,
                        &ctx.kernel,
                        z0,
                        cfg.n_cycles,
                        &observables,
                        &ForwardOptions::default(),
                        &mut rng,
                    )
                }
                Method::Hitting => Err(Error::Config(
                    "hitting method applies to diffusion/bm models only".into(),
                )),
            }
        }
        BuiltModel::Diffusion(model) => {
            let f = cfg.observable.resolve(None)?;
            crate::models::simulate_diffusion_cycles(model, cfg.n_cycles, &[f], &mut rng)
        }
        BuiltModel::BrownianExact => {
            let initial = sample_bm_cycle_duration(&mut rng);
            let durations: Vec<f64> = (0..cfg.n_cycles)
                .map(|_| sample_bm_cycle_duration(&mut rng))
                .collect();
            Ok(RegenerationStream::from_durations(initial, durations))
        }
    }
}

fn generate_nt(
    cfg: &ExperimentConfig,
    built: &BuiltModel,
    ctx: Option<&CtmcContext>,
) -> Result<Option<NtSamples>> {
    let t_max = *cfg.t_grid.last().unwrap();
    let replications: Result<Vec<RegenerationStream>> = match built {
        BuiltModel::Ctmc(_) => {
            let ctx = ctx.expect("ctmc context prepared");
            (0..cfg.nt_replications)
                .map(|r| {
                    let mut rng = derive_stream(cfg.master_seed, r as u64, "nt");
                    retrospective_engine(
                        &ctx.model,
                        &ctx.cert,
                        &ctx.kernel,
                        StartLaw::Nu,
                        CycleTarget::Horizon(t_max),
                        &[],
                        false,
                        &mut rng,
                    )
                })
                .collect()
        }
        BuiltModel::BrownianExact => (0..cfg.nt_replications)
            .map(|r| {
                let mut rng = derive_stream(cfg.master_seed, r as u64, "nt");
                Ok(simulate_until_horizon_bm(t_max, &mut rng))
            })
            .collect(),
        // Grid diffusions would need prohibitively long paths here.
        BuiltModel::Diffusion(_) => return Ok(None),
    };
    let nt = crate::regeneration::count_regenerations(&replications?, &cfg.t_grid)?;
    Ok(Some(nt))
}

/// `simulate`: write cycles.csv, samples.csv, nt.csv (where applicable),
/// config.json and manifest.json under `out_dir`.
pub fn cmd_simulate(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let started = Instant::now();
    let cfg = load_config(config_path, seed)?;
    std::fs::create_dir_all(out_dir)?;
    let built = cfg.model_spec()?.build()?;
    let ctx = match &built {
        BuiltModel::Ctmc(model) => Some(ctmc_context(&cfg, model)?),
        _ => None,
    };

    let cycles = generate_cycles(&cfg, &built, ctx.as_ref())?;
    write_cycles_csv_path(&cycles, &out_dir.join("cycles.csv"))?;

    let samples = run_replications(&cfg, ctx.as_ref().map(|c| &c.cert))?;
    let file = std::fs::File::create(out_dir.join("samples.csv"))?;
    write_samples_csv(&samples, std::io::BufWriter::new(file))?;

    let mut outputs = vec![
        "cycles.csv".to_string(),
        "samples.csv".to_string(),
        "config.json".to_string(),
        "manifest.json".to_string(),
    ];
    if let Some(nt) = generate_nt(&cfg, &built, ctx.as_ref())? {
        let file = std::fs::File::create(out_dir.join("nt.csv"))?;
        nt.write_csv(std::io::BufWriter::new(file))?;
        outputs.push("nt.csv".to_string());
    }

    std::fs::write(out_dir.join("config.json"), cfg.canonical_json())?;
    let model_hash = cfg.model_spec()?.content_hash();
    let manifest = RunManifest {
        schema_version: 1,
        config_hash: cfg.content_hash(),
        master_seed: cfg.master_seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: now_unix(),
        wall_time_s: started.elapsed().as_secs_f64(),
        method: cfg.method.to_string(),
        model_hash,
        small_set: ctx.as_ref().map(|c| c.cert.small_set().to_vec()).unwrap_or_default(),
        alpha_minor: ctx.as_ref().map(|c| c.cert.alpha_minor()),
        nu: ctx.as_ref().map(|c| c.cert.nu().to_vec()),
        outputs,
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// The constants document written by `estimate`. The invariant measure is
/// carried under both normalizations: total mass one, and total mass
/// m = E(R_2 - R_1) matching the cycle formula.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub schema_version: u32,
    pub observable: String,
    #[serde(flatten)]
    pub constants: ConstantEstimates,
    pub cf_table: Vec<crate::regeneration::CfRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary_probability: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary_cycle_mass: Option<Vec<f64>>,
}

/// `estimate`: read cycles.csv, estimate C(f), K(f), B(f), m, the Laplace
/// table and (when nt.csv exists) the v*_t table; write constants.json.
pub fn cmd_estimate(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = load_config(config_path, seed)?;
    let cycles_path = out_dir.join("cycles.csv");
    if !cycles_path.exists() {
        return Err(Error::Config(format!(
            "missing {}; run `simulate` first",
            cycles_path.display()
        )));
    }
    let stream = read_cycles_csv(&cycles_path)?;
    let built = cfg.model_spec()?.build()?;
    let mut rng = derive_stream(cfg.master_seed, 0, "cf");
    let (f, cf): (ObservableSpec, CfEstimate) = match &built {
        BuiltModel::Ctmc(model) => {
            let ctx = ctmc_context(&cfg, model)?;
            let f = cfg.observable.resolve(Some(model))?;
            let cf = estimate_cf_ctmc(model, &ctx.cert, &ctx.kernel, &f, cfg.cf_samples, &mut rng)?;
            (f, cf)
        }
        BuiltModel::Diffusion(model) => {
            let f = cfg.observable.resolve(None)?;
            let cf = estimate_cf_diffusion(model, &f, cfg.cf_samples, &mut rng)?;
            (f, cf)
        }
        BuiltModel::BrownianExact => {
            let f = ObservableSpec::zero();
            (
                f,
                CfEstimate {
                    c_f: crate::stats::Estimate::exact(0.0),
                    table: Vec::new(),
                },
            )
        }
    };
    let mut constants = constants_from_cycles(&stream, &f, cf.c_f)?;
    let lambda_hi = 50.0 / constants.m_hat.value.max(1e-9);
    let grid: Vec<f64> = (0..160)
        .map(|i| (1e-4f64.ln() + (lambda_hi.ln() - 1e-4f64.ln()) * i as f64 / 159.0).exp())
        .collect();
    constants.laplace = laplace_table(&stream, &grid)?;
    let nt_path = out_dir.join("nt.csv");
    if nt_path.exists() {
        let nt = NtSamples::read_csv(&nt_path)?;
        constants.vstar = nt.vstar_points();
    }
    let stationary = match &built {
        BuiltModel::Ctmc(model) => Some(crate::resolvent::stationary_measure(model)?),
        _ => None,
    };
    let stationary_probability = stationary.as_ref().map(|pi| pi.weights().to_vec());
    let stationary_cycle_mass = stationary
        .as_ref()
        .map(|pi| pi.cycle_normalized(constants.m_hat.value).weights().to_vec());
    let report = ConstantsReport {
        schema_version: 1,
        observable: cfg.observable.name.clone(),
        constants,
        cf_table: cf.table,
        stationary_probability,
        stationary_cycle_mass,
    };
    std::fs::write(
        out_dir.join("constants.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(())
}

/// `curve`: build the deviation curve from samples (reused from the run
/// directory when present) and the estimated constants; write curve.csv and
/// per-t gnuplot slices.
pub fn cmd_curve(
    config_path: &Path,
    constants_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = load_config(config_path, seed)?;
    let text = std::fs::read_to_string(constants_path).map_err(|e| {
        Error::Config(format!(
            "cannot read constants '{}': {e}",
            constants_path.display()
        ))
    })?;
    let report: ConstantsReport = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("malformed constants file: {e}")))?;
    let constants = report.constants;
    if constants.laplace.is_empty() {
        return Err(Error::Config("constants file lacks a laplace table".into()));
    }
    let transform = LaplaceTransform::Table(constants.laplace.clone());
    std::fs::create_dir_all(out_dir)?;
    let samples_path = out_dir.join("samples.csv");
    let samples = if samples_path.exists() {
        read_samples_csv(&samples_path)?
    } else {
        let built = cfg.model_spec()?.build()?;
        let ctx = match &built {
            BuiltModel::Ctmc(model) => Some(ctmc_context(&cfg, model)?),
            _ => None,
        };
        let s = run_replications(&cfg, ctx.as_ref().map(|c| &c.cert))?;
        let file = std::fs::File::create(&samples_path)?;
        write_samples_csv(&s, std::io::BufWriter::new(file))?;
        s
    };
    let curve = deviation_curve(&cfg, &samples, &constants, &transform)?;
    let file = std::fs::File::create(out_dir.join("curve.csv"))?;
    write_curve_csv(&curve, std::io::BufWriter::new(file))?;
    write_gnuplot_slices(&curve, out_dir, "curve")?;
    // Bare bound table without the empirical columns.
    let rows: Vec<crate::bounds::BoundTableRow> = curve
        .rows
        .iter()
        .map(|r| crate::bounds::BoundTableRow {
            regime: r.regime.clone(),
            t: r.t,
            x: r.x,
            eta: r.eta,
            gaussian_term: r.gaussian_term,
            exponential_term: r.exponential_term,
            clock_term: r.clock_term,
            total: r.bound_total,
            vacuous: r.vacuous,
        })
        .collect();
    let file = std::fs::File::create(out_dir.join("bounds.csv"))?;
    crate::bounds::write_bound_table(&rows, std::io::BufWriter::new(file))?;
    Ok(())
}

/// `matrices`: debugging export of the exact linear-algebra objects: the
/// transition matrix at `t`, the resolvent and the stationary measure.
pub fn cmd_matrices(config_path: &Path, out_dir: &Path, t: f64) -> Result<()> {
    let cfg = load_config(config_path, None)?;
    let built = cfg.model_spec()?.build()?;
    let BuiltModel::Ctmc(model) = built else {
        return Err(Error::Config(
            "matrix export applies to finite-chain models".into(),
        ));
    };
    std::fs::create_dir_all(out_dir)?;
    let write_matrix = |name: &str, m: &nalgebra::DMatrix<f64>| -> Result<()> {
        let mut out = String::new();
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(out_dir.join(name), out)?;
        Ok(())
    };
    write_matrix(
        &format!("transition_t{t}.csv"),
        &crate::resolvent::transition_matrix(&model, t)?,
    )?;
    let kernel = resolvent_kernel(&model)?;
    write_matrix("resolvent.csv", kernel.matrix())?;
    let pi = crate::resolvent::stationary_measure(&model)?;
    let line: Vec<String> = pi.weights().iter().map(|w| w.to_string()).collect();
    std::fs::write(out_dir.join("stationary.csv"), format!("{}\n", line.join(",")))?;
    Ok(())
}

fn vacuous_on_insufficient(name: &str, result: Result<Vec<CheckReport>>) -> Vec<CheckReport> {
    match result {
        Ok(r) => r,
        Err(Error::InsufficientData(msg)) => vec![CheckReport {
            check_name: name.to_string(),
            status: crate::verify::CheckStatus::Vacuous,
            statistic: f64::NAN,
            threshold: f64::NAN,
            details: format!("skipped: {msg}"),
        }],
        Err(e) => vec![CheckReport {
            check_name: name.to_string(),
            status: crate::verify::CheckStatus::Fail,
            statistic: f64::NAN,
            threshold: f64::NAN,
            details: format!("check errored: {e}"),
        }],
    }
}

/// `verify`: run every applicable statistical check over a completed run
/// directory, write report.json and print the summary table. Returns true
/// when all non-vacuous checks pass.
pub fn cmd_verify(out_dir: &Path) -> Result<bool> {
    let config_path = out_dir.join("config.json");
    if !config_path.exists() {
        return Err(Error::Config(format!(
            "missing {}; not a completed simulate run",
            config_path.display()
        )));
    }
    let cfg = ExperimentConfig::parse(&std::fs::read_to_string(&config_path)?)?;
    // The manifest hash must match the stored config.
    let manifest_path = out_dir.join("manifest.json");
    if manifest_path.exists() {
        let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
        if manifest.config_hash != cfg.content_hash() {
            return Err(Error::Config(
                "manifest config_hash does not match config.json".into(),
            ));
        }
    }
    let cycles_path = out_dir.join("cycles.csv");
    if !cycles_path.exists() {
        return Err(Error::Config(format!("missing {}", cycles_path.display())));
    }
    let mut stream = read_cycles_csv(&cycles_path)?;
    let faults = cfg.faults.clone().unwrap_or_default();
    if faults.splice_cycles {
        stream = splice_cycles(&stream);
    }

    let thresholds = Thresholds::default();
    let mut checks: Vec<CheckReport> = Vec::new();

    let built = cfg.model_spec()?.build()?;
    let cert = match &built {
        BuiltModel::Ctmc(model) => Some(ctmc_context(&cfg, model)?.cert),
        _ => None,
    };
    checks.extend(vacuous_on_insufficient(
        "dependence_structure",
        check_dependence_structure(&stream, cert.as_ref(), &thresholds),
    ));

    let constants_path = out_dir.join("constants.json");
    if constants_path.exists() {
        let report: ConstantsReport =
            serde_json::from_str(&std::fs::read_to_string(&constants_path)?)
                .map_err(|e| Error::Config(format!("malformed constants file: {e}")))?;
        let mut k_f = report.constants.k_f;
        if faults.halve_kf {
            k_f /= 2.0;
        }
        if let Ok(xi) = stream.xi_column(&report.observable) {
            checks.extend(vacuous_on_insufficient(
                "xi_moments",
                check_xi_moments(&xi, k_f, 4, &thresholds),
            ));
        }
    } else {
        checks.push(CheckReport {
            check_name: "xi_moments".into(),
            status: crate::verify::CheckStatus::Vacuous,
            statistic: f64::NAN,
            threshold: f64::NAN,
            details: "no constants.json; run `estimate` first".into(),
        });
    }

    let nt_path = out_dir.join("nt.csv");
    if nt_path.exists() {
        let nt = NtSamples::read_csv(&nt_path)?;
        checks.extend(vacuous_on_insufficient(
            "nt_moments",
            check_nt_moments(&nt, 3, &thresholds),
        ));
    }

    if let Some(alpha) = cfg.tail_alpha {
        let durations = stream.durations();
        checks.extend(vacuous_on_insufficient(
            "tail_index",
            check_tail_index(&durations, alpha, &thresholds).map(|r| vec![r]),
        ));
    }

    let curve_path = out_dir.join("curve.csv");
    if curve_path.exists() {
        let curve = read_curve_csv(&curve_path)?;
        checks.extend(vacuous_on_insufficient(
            "bound_domination",
            check_bound_domination(&curve).map(|r| vec![r]),
        ));
    }

    let report = VerificationReport::new(thresholds, checks);
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    print!("{}", report.render_table());
    let ok = report.all_non_vacuous_pass();
    if !ok {
        eprintln!("failing checks: {}", report.failing_names().join(", "));
    }
    Ok(ok)
}

/// `report`: print the stored verification summary and manifest facts.
pub fn cmd_report(out_dir: &Path) -> Result<()> {
    let report_path = out_dir.join("report.json");
    if !report_path.exists() {
        return Err(Error::Config(format!(
            "missing {}; run `verify` first",
            report_path.display()
        )));
    }
    let report: VerificationReport = serde_json::from_str(&std::fs::read_to_string(&report_path)?)?;
    let manifest_path = out_dir.join("manifest.json");
    if manifest_path.exists() {
        let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
        println!(
            "run {} (seed {}, method {}, code {})",
            manifest.config_hash, manifest.master_seed, manifest.method, manifest.code_version
        );
    }
    print!("{}", report.render_table());
    Ok(())
}

/// Convenience for tests and bindings that need a certificate quickly.
pub fn certificate_for(model: &CtmcModel, small_set: Option<&[usize]>) -> Result<MinorizationCert> {
    let kernel = resolvent_kernel(model)?;
    let set: Vec<usize> = small_set
        .map(<[usize]>::to_vec)
        .unwrap_or_else(|| (0..model.n_states()).collect());
    compute_minorization(&kernel, &set)
}
