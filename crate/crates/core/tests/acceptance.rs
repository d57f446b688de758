//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured statistic. Run with `cargo test --test acceptance --
//! --nocapture` to see the per-criterion summary.

use std::sync::OnceLock;

use harris_regen::bounds::{
    birge_massart, lambda_star_t, vstar_sandwich, BoundRegime, LaplaceTransform,
};
use harris_regen::models::{
    build_two_state_ctmc, sample_bm_cycle_duration, simulate_diffusion_cycles, CtmcModel,
    Diffusion1D, DriftFn, ModelSpec,
};
use harris_regen::montecarlo::{
    deviation_curve, run_replications, ExperimentConfig, FaultSpec, Method,
};
use harris_regen::regeneration::{
    constants_from_cycles, count_regenerations, empirical_laplace, estimate_cf_ctmc,
    estimate_cf_diffusion, kac_ratio, laplace_table, ConstantEstimates, NamedObservable,
    ObservableConfig, ObservableSpec,
};
use harris_regen::resolvent::{resolvent_kernel, stationary_measure, ResolventKernel};
use harris_regen::splitting::{
    compute_minorization, forward_split_chain, retrospective_engine, retrospective_regeneration,
    simulate_until_horizon_bm, verify_certificate, CycleTarget, ForwardOptions, MinorizationCert,
    RegenerationStream, SplitState, StartLaw,
};
use harris_regen::stats::{ks_two_sample, mean_and_se, Estimate};
use harris_regen::streams::derive_stream;
use harris_regen::verify::{
    check_bound_domination, check_dependence_structure, check_nt_moments, check_tail_index,
    check_xi_moments, splice_cycles, CheckStatus, Thresholds,
};
use rayon::prelude::*;

// ---------------------------------------------------------------------------
// Shared fixtures
// ---------------------------------------------------------------------------

struct TwoStateFixture {
    model: CtmcModel,
    kernel: ResolventKernel,
    cert: MinorizationCert,
    f_centered: ObservableSpec,
    cycles: RegenerationStream,
    constants: ConstantEstimates,
    transform: LaplaceTransform,
}

fn two_state() -> &'static TwoStateFixture {
    static FIX: OnceLock<TwoStateFixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let model = build_two_state_ctmc(1.0, 1.0).unwrap();
        let kernel = resolvent_kernel(&model).unwrap();
        let cert = compute_minorization(&kernel, &[0, 1]).unwrap();
        let pi = stationary_measure(&model).unwrap();
        let f = ObservableSpec::centered_indicator("f0c", 0, &pi).unwrap();
        let mut rng = derive_stream(42, 0, "fixture-two-state");
        let cycles =
            retrospective_regeneration(&model, &cert, &kernel, 0, 20_000, std::slice::from_ref(&f), &mut rng)
                .unwrap();
        let mut rng = derive_stream(42, 1, "fixture-two-state-cf");
        let cf = estimate_cf_ctmc(&model, &cert, &kernel, &f, 4_000, &mut rng).unwrap();
        let mut constants = constants_from_cycles(&cycles, &f, cf.c_f).unwrap();
        let lambda_hi = 50.0 / constants.m_hat.value;
        let grid: Vec<f64> = (0..160)
            .map(|i| (1e-4f64.ln() + (lambda_hi.ln() - 1e-4f64.ln()) * i as f64 / 159.0).exp())
            .collect();
        constants.laplace = laplace_table(&cycles, &grid).unwrap();
        let transform = LaplaceTransform::Table(constants.laplace.clone());
        TwoStateFixture {
            model,
            kernel,
            cert,
            f_centered: f,
            cycles,
            constants,
            transform,
        }
    })
}

struct BmFixture {
    /// Grid cycles with tent integrals (1e-3 grid, 1e5 kept cycles).
    grid_cycles: RegenerationStream,
    /// Constants for the tent observable (k from the diffusion C(f) grid).
    constants: ConstantEstimates,
    /// 1e6 exact cycle durations.
    exact_durations: Vec<f64>,
}

fn bm() -> &'static BmFixture {
    static FIX: OnceLock<BmFixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let tent = ObservableSpec::odd_tent("tent");
        let grid_model = Diffusion1D::new(DriftFn::Zero, 1.0, 0.0, 1.0, 1e-3)
            .unwrap()
            .with_max_cycle(30.0);
        // Pool independently seeded chunks in parallel.
        let parts: Vec<RegenerationStream> = (0..8u64)
            .into_par_iter()
            .map(|c| {
                let mut rng = derive_stream(43, c, "fixture-bm-grid");
                simulate_diffusion_cycles(&grid_model, 12_500, std::slice::from_ref(&tent), &mut rng).unwrap()
            })
            .collect();
        let mut initial = None;
        let mut records = Vec::new();
        let mut discarded = 0;
        for p in parts {
            discarded += p.discarded;
            if initial.is_none() {
                initial = Some(p.initial);
            } else {
                records.push(p.initial);
            }
            records.extend(p.records);
        }
        for (i, r) in records.iter_mut().enumerate() {
            r.index = i as u64 + 2;
        }
        let grid_cycles = RegenerationStream {
            initial: initial.unwrap(),
            records,
            clock_times: None,
            start_states: None,
            jump_uniforms: None,
            discarded,
            observable_names: vec!["tent".into()],
        };
        let cf_model = Diffusion1D::new(DriftFn::Zero, 1.0, 0.0, 1.0, 1e-3)
            .unwrap()
            .with_max_cycle(1_000.0);
        let mut rng = derive_stream(43, 100, "fixture-bm-cf");
        let cf = estimate_cf_diffusion(&cf_model, &tent, 200, &mut rng).unwrap();
        let constants = constants_from_cycles(&grid_cycles, &tent, cf.c_f).unwrap();
        let mut rng = derive_stream(43, 200, "fixture-bm-exact");
        let exact_durations: Vec<f64> = (0..1_000_000)
            .map(|_| sample_bm_cycle_duration(&mut rng))
            .collect();
        BmFixture {
            grid_cycles,
            constants,
            exact_durations,
        }
    })
}

fn base_two_state_config() -> ExperimentConfig {
    ExperimentConfig {
        schema_version: 1,
        master_seed: 4242,
        replications: 10_000,
        method: Method::Retrospective,
        regime: BoundRegime::PositiveEta,
        t_grid: vec![50.0, 200.0],
        x_grid: vec![0.5, 1.0, 2.0, 4.0],
        eta_dev: Some(0.5),
        alpha_reg: None,
        l_t: None,
        n_cycles: 20_000,
        cf_samples: 4_000,
        nt_replications: 10_000,
        tail_alpha: None,
        small_set: None,
        model: Some(ModelSpec::Ctmc {
            states: vec!["0".into(), "1".into()],
            generator: vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
            reference_measure: None,
        }),
        model_path: None,
        observable: NamedObservable {
            name: "f0c".into(),
            config: ObservableConfig::StateIndicator {
                state: 0,
                centered: true,
            },
        },
        faults: None,
    }
}

fn passline(criterion: &str, detail: String) {
    println!("[acceptance] {criterion}: PASS ({detail})");
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn c01_brownian_laplace_transform() {
    let fix = bm();
    let stream =
        RegenerationStream::from_durations(fix.exact_durations[0], fix.exact_durations[1..].to_vec());
    let mut details = Vec::new();
    for lambda in [0.1f64, 0.5, 1.0] {
        let est = empirical_laplace(&stream, lambda).unwrap();
        let expected = (-2.0 * (2.0 * lambda).sqrt()).exp();
        let z = (est.value - expected).abs() / est.stderr;
        assert!(
            z < 3.0,
            "C1 FAIL: F({lambda}) = {} vs {expected} ({z:.2} se)",
            est.value
        );
        details.push(format!("F({lambda}) off by {z:.2} se"));
    }
    passline("C1 Brownian Laplace transform", details.join(", "));
}

#[test]
fn c02_kac_ratio_two_state() {
    let model = build_two_state_ctmc(1.0, 3.0).unwrap();
    let kernel = resolvent_kernel(&model).unwrap();
    let cert = compute_minorization(&kernel, &[0, 1]).unwrap();
    let f = ObservableSpec::state_indicator("f0", 2, 0).unwrap();
    let g = ObservableSpec::state_indicator("f1", 2, 1).unwrap();
    let mut rng = derive_stream(44, 0, "kac-acceptance");
    let stream =
        retrospective_regeneration(&model, &cert, &kernel, 0, 100_000, &[f, g], &mut rng).unwrap();
    let k = kac_ratio(&stream, "f0", "f1").unwrap();
    assert!(
        k.ci_low <= 3.0 && 3.0 <= k.ci_high,
        "C2 FAIL: ratio {} CI ({}, {})",
        k.ratio,
        k.ci_low,
        k.ci_high
    );
    passline(
        "C2 Kac ratio",
        format!("ratio {:.4}, 99% CI ({:.4}, {:.4})", k.ratio, k.ci_low, k.ci_high),
    );
}

#[test]
fn c03_minorization_certificate() {
    let fix = two_state();
    let cert = &fix.cert;
    assert!(
        (cert.alpha_minor() - 2.0 / 3.0).abs() <= 1e-12,
        "C3 FAIL: alpha {}",
        cert.alpha_minor()
    );
    assert!((cert.nu()[0] - 0.5).abs() <= 1e-12 && (cert.nu()[1] - 0.5).abs() <= 1e-12);
    verify_certificate(cert, &fix.kernel).unwrap();
    passline(
        "C3 minorization certificate",
        format!(
            "alpha = {} (2/3 within 1e-12), nu = (1/2, 1/2), exhaustive inequality pass",
            cert.alpha_minor()
        ),
    );
}

#[test]
fn c04_forward_retrospective_equivalence() {
    let fix = two_state();
    let mut rng = derive_stream(45, 0, "forward-acceptance");
    let z0 = SplitState::sample_initial(&fix.cert, &fix.kernel, 0, &mut rng).unwrap();
    let forward = forward_split_chain(
        &fix.model,
        &fix.cert,
        &fix.kernel,
        z0,
        10_000,
        &[],
        &ForwardOptions::default(),
        &mut rng,
    )
    .unwrap();
    let mut rng = derive_stream(45, 1, "retro-acceptance");
    let retro =
        retrospective_regeneration(&fix.model, &fix.cert, &fix.kernel, 0, 10_000, &[], &mut rng)
            .unwrap();
    let (d, p) = ks_two_sample(&forward.durations(), &retro.durations()).unwrap();
    assert!(p > 0.01, "C4 FAIL: KS D = {d}, p = {p}");
    // Cross-method mean agreement as a two-sample t statistic.
    let t = harris_regen::stats::welch_t(&forward.durations(), &retro.durations());
    assert!(t.abs() < 3.0, "C4 FAIL: t = {t}");
    passline(
        "C4 forward/retrospective equivalence",
        format!("KS D = {d:.5}, p = {p:.3}; mean t-stat = {t:.2}"),
    );
}

#[test]
fn c05_moment_bounds() {
    let thresholds = Thresholds::default();
    // Two-state xi moments on 1e5 cycles of the centered observable.
    let fix = two_state();
    let mut rng = derive_stream(46, 0, "xi-moments-two-state");
    let stream = retrospective_regeneration(
        &fix.model,
        &fix.cert,
        &fix.kernel,
        0,
        100_000,
        std::slice::from_ref(&fix.f_centered),
        &mut rng,
    )
    .unwrap();
    let xi = stream.xi_column("f0c").unwrap();
    let reports = check_xi_moments(&xi, fix.constants.k_f, 4, &thresholds).unwrap();
    for r in &reports {
        assert!(!r.failed(), "C5 FAIL: {} ({})", r.check_name, r.details);
    }
    // Two-state N_t moments at t = 50 over 1e4 replications.
    let t_grid = [50.0];
    let streams: Vec<_> = (0..10_000u64)
        .map(|r| {
            let mut rng = derive_stream(46, r, "nt-two-state");
            retrospective_engine(
                &fix.model,
                &fix.cert,
                &fix.kernel,
                StartLaw::Nu,
                CycleTarget::Horizon(50.0),
                &[],
                false,
                &mut rng,
            )
            .unwrap()
        })
        .collect();
    let nt = count_regenerations(&streams, &t_grid).unwrap();
    let reports = check_nt_moments(&nt, 3, &thresholds).unwrap();
    for r in &reports {
        assert!(!r.failed(), "C5 FAIL: {} ({})", r.check_name, r.details);
    }
    // Brownian xi moments on the 1e5-cycle grid stream.
    let bm_fix = bm();
    let xi = bm_fix.grid_cycles.xi_column("tent").unwrap();
    let reports = check_xi_moments(&xi, bm_fix.constants.k_f, 4, &thresholds).unwrap();
    for r in &reports {
        assert!(!r.failed(), "C5 FAIL (bm): {} ({})", r.check_name, r.details);
    }
    // Brownian N_t moments from the exact sampler.
    let streams: Vec<_> = (0..10_000u64)
        .map(|r| {
            let mut rng = derive_stream(46, r, "nt-bm");
            simulate_until_horizon_bm(1.0e4, &mut rng)
        })
        .collect();
    let nt = count_regenerations(&streams, &[1.0e3, 1.0e4]).unwrap();
    let reports = check_nt_moments(&nt, 3, &thresholds).unwrap();
    for r in &reports {
        assert!(!r.failed(), "C5 FAIL (bm): {} ({})", r.check_name, r.details);
    }
    passline(
        "C5 moment bounds",
        format!(
            "xi p1-4 and N_t p1-3 pass on two-state (K = {:.3}) and Brownian (K = {:.3}) cycles",
            fix.constants.k_f, bm_fix.constants.k_f
        ),
    );
}

#[test]
fn c06_bound_domination_positive() {
    let fix = two_state();
    let cfg = base_two_state_config();
    let samples = run_replications(&cfg, Some(&fix.cert)).unwrap();
    let mut summaries = Vec::new();
    for (regime, eta) in [
        (BoundRegime::PositiveEta, Some(0.25)),
        (BoundRegime::PositiveEta, Some(0.5)),
        (BoundRegime::PositiveClt, None),
    ] {
        let mut cfg = cfg.clone();
        cfg.regime = regime;
        cfg.eta_dev = eta;
        let curve = deviation_curve(&cfg, &samples, &fix.constants, &fix.transform).unwrap();
        let report = check_bound_domination(&curve).unwrap();
        assert!(
            report.status == CheckStatus::Pass,
            "C6 FAIL ({regime}, eta {eta:?}): {}",
            report.details
        );
        let non_vacuous = curve.rows.iter().filter(|r| !r.vacuous).count();
        summaries.push(format!("{regime} eta {eta:?}: {non_vacuous} non-vacuous rows dominated"));
    }
    passline("C6 bound domination (positive regimes)", summaries.join("; "));
}

#[test]
fn c07_bound_domination_null_regular() {
    let bm_fix = bm();
    let mut constants = bm_fix.constants.clone();
    // v*_t from the exact cycle sampler.
    let streams: Vec<_> = (0..10_000u64)
        .map(|r| {
            let mut rng = derive_stream(47, r, "c7-vstar");
            simulate_until_horizon_bm(1.0e4, &mut rng)
        })
        .collect();
    let nt = count_regenerations(&streams, &[1.0e3, 1.0e4]).unwrap();
    constants.vstar = nt.vstar_points();

    let cfg = ExperimentConfig {
        schema_version: 1,
        master_seed: 4747,
        replications: 10_000,
        method: Method::Hitting,
        regime: BoundRegime::NullGeneral,
        t_grid: vec![1.0e3, 1.0e4],
        x_grid: vec![1.0, 2.0, 4.0],
        eta_dev: Some(0.5),
        alpha_reg: None,
        l_t: None,
        n_cycles: 1_000,
        cf_samples: 200,
        nt_replications: 1_000,
        tail_alpha: Some(0.5),
        small_set: None,
        model: Some(ModelSpec::Diffusion1d {
            drift: DriftFn::Zero,
            sigma: 1.0,
            regen_levels: (0.0, 1.0),
            step: 0.01,
            max_cycle_duration: None,
        }),
        model_path: None,
        observable: NamedObservable {
            name: "tent".into(),
            config: ObservableConfig::OddTent,
        },
        faults: None,
    };
    let samples = run_replications(&cfg, None).unwrap();

    let null_curve =
        deviation_curve(&cfg, &samples, &constants, &LaplaceTransform::BrownianLevels01).unwrap();
    let null_report = check_bound_domination(&null_curve).unwrap();
    assert!(
        null_report.status == CheckStatus::Pass,
        "C7 FAIL (null): {}",
        null_report.details
    );

    let mut reg_cfg = cfg.clone();
    reg_cfg.regime = BoundRegime::Regular;
    reg_cfg.eta_dev = Some(0.25);
    reg_cfg.alpha_reg = Some(0.5);
    reg_cfg.l_t = Some(2.0 * 2.0f64.sqrt());
    let reg_curve = deviation_curve(
        &reg_cfg,
        &samples,
        &constants,
        &LaplaceTransform::BrownianLevels01,
    )
    .unwrap();
    let reg_report = check_bound_domination(&reg_curve).unwrap();
    assert!(
        reg_report.status == CheckStatus::Pass,
        "C7 FAIL (regular): {}",
        reg_report.details
    );
    passline(
        "C7 bound domination (null/regular regimes)",
        format!(
            "null: {}; regular: {}",
            null_report.details, reg_report.details
        ),
    );
}

#[test]
fn c08_tail_index() {
    let fix = bm();
    let report = check_tail_index(&fix.exact_durations, 0.5, &Thresholds::default()).unwrap();
    assert!(
        report.status == CheckStatus::Pass,
        "C8 FAIL: {}",
        report.details
    );
    passline("C8 tail index", report.details.clone());
}

#[test]
fn c09_birge_massart() {
    // Spot value at y = v = 1.
    let (sup, lower) = birge_massart(1.0, 1.0).unwrap();
    assert!((sup - 0.17157287525381).abs() < 1e-9 && sup >= 1.0 / 6.0);
    assert!((lower - 1.0 / 6.0).abs() < 1e-12);
    // 100 random pairs: inequality plus agreement with a grid search.
    let mut rng = derive_stream(48, 0, "birge");
    let mut worst_gap = f64::INFINITY;
    for _ in 0..100 {
        let y = 10.0 * rand::Rng::random::<f64>(&mut rng).max(1e-4);
        let v = 10.0 * rand::Rng::random::<f64>(&mut rng).max(1e-4);
        let (sup, lower) = birge_massart(y, v).unwrap();
        assert!(sup >= lower, "C9 FAIL at (y={y}, v={v})");
        let mut grid_best: f64 = 0.0;
        let n = 400_000;
        for i in 1..n {
            let l = (i as f64 / n as f64) / v;
            grid_best = grid_best.max(l * y - l * l * v * v / (1.0 - l * v));
        }
        let rel = (sup - grid_best).abs() / sup.max(1e-300);
        assert!(rel < 1e-6, "C9 FAIL: closed form vs grid rel err {rel}");
        worst_gap = worst_gap.min(sup - lower);
    }
    passline(
        "C9 Birge-Massart",
        format!("sup(1,1) = {sup:.5} >= 1/6; 100 random pairs hold; min slack {worst_gap:.3e}"),
    );
}

#[test]
fn c10_regular_regime_floor() {
    let l_t = 2.0 * 2.0f64.sqrt();
    let v = lambda_star_t(&LaplaceTransform::BrownianLevels01, 0.5, 0.25, 1.0e6, l_t).unwrap();
    let floor = 0.9 * 0.25;
    assert!(v >= floor, "C10 FAIL: Lambda*_t = {v} < {floor}");
    passline(
        "C10 regular-regime floor",
        format!("Lambda*_t(1e6) = {v:.6} >= 0.9 (1-a) a^(a/(1-a)) = {floor}"),
    );
}

#[test]
fn c11_vstar_sandwich() {
    let fix = two_state();
    let t = 1.0e3;
    // g = uncentered indicator of state 0.
    let g = ObservableSpec::state_indicator("g0", 2, 0).unwrap();
    // v_t = E_nu integral of g over [0, t] by replication.
    let mut cfg = base_two_state_config();
    cfg.t_grid = vec![t];
    cfg.replications = 4_000;
    cfg.observable = NamedObservable {
        name: "g0".into(),
        config: ObservableConfig::StateIndicator {
            state: 0,
            centered: false,
        },
    };
    cfg.master_seed = 1111;
    let samples = run_replications(&cfg, Some(&fix.cert)).unwrap();
    let v_t = mean_and_se(&samples.samples[0]);
    // v*_t from horizon replications started at nu.
    let streams: Vec<_> = (0..4_000u64)
        .map(|r| {
            let mut rng = derive_stream(1111, r, "c11-vstar");
            retrospective_engine(
                &fix.model,
                &fix.cert,
                &fix.kernel,
                StartLaw::Nu,
                CycleTarget::Horizon(t),
                &[],
                false,
                &mut rng,
            )
            .unwrap()
        })
        .collect();
    let nt = count_regenerations(&streams, &[t]).unwrap();
    let vstar_t = nt.vstar[0];
    // mu(g) under the cycle normalization = mean cycle integral of g.
    let mut rng = derive_stream(1111, 9_999, "c11-mu");
    let stream = retrospective_regeneration(
        &fix.model,
        &fix.cert,
        &fix.kernel,
        0,
        60_000,
        std::slice::from_ref(&g),
        &mut rng,
    )
    .unwrap();
    let mu_g = mean_and_se(&stream.xi_column("g0").unwrap());
    // C(g) with its safety margin.
    let mut rng = derive_stream(1111, 10_000, "c11-cg");
    let cf = estimate_cf_ctmc(&fix.model, &fix.cert, &fix.kernel, &g, 4_000, &mut rng).unwrap();
    let report = vstar_sandwich(v_t, Estimate::new(vstar_t.value, vstar_t.stderr), cf.c_f.value, mu_g)
        .unwrap();
    assert!(
        report.pass(),
        "C11 FAIL: upper slack {}, lower slack {}, pooled se {}",
        report.upper_slack,
        report.lower_slack,
        report.pooled_se
    );
    passline(
        "C11 v*-sandwich",
        format!(
            "v_t = {:.2}, v*_t = {:.2}, mu(g) = {:.4}, C(g) = {:.3}; slacks ({:.2}, {:.2}) with 3se = {:.2}",
            v_t.value,
            vstar_t.value,
            mu_g.value,
            cf.c_f.value,
            report.upper_slack,
            report.lower_slack,
            3.0 * report.pooled_se
        ),
    );
}

#[test]
fn c12_negative_controls() {
    let thresholds = Thresholds::default();
    // (a) Spliced (overlapping) cycles must fail the dependence bundle.
    let fix = two_state();
    let spliced = splice_cycles(&fix.cycles);
    let reports = check_dependence_structure(&spliced, Some(&fix.cert), &thresholds).unwrap();
    assert!(
        reports.iter().any(|r| r.failed()),
        "C12 FAIL: splice fault not detected"
    );
    let spliced_failures: Vec<_> = reports
        .iter()
        .filter(|r| r.failed())
        .map(|r| r.check_name.clone())
        .collect();
    // Honest stream passes the same bundle.
    let honest = check_dependence_structure(&fix.cycles, Some(&fix.cert), &thresholds).unwrap();
    assert!(honest.iter().all(|r| !r.failed()), "C12: honest stream must pass");

    // (b) Bound divided by 1e6 must break domination.
    let cfg = base_two_state_config();
    let samples = run_replications(&cfg, Some(&fix.cert)).unwrap();
    let mut faulted_cfg = cfg.clone();
    faulted_cfg.faults = Some(FaultSpec {
        splice_cycles: false,
        bound_divisor: Some(1.0e6),
        halve_kf: false,
    });
    let honest_curve = deviation_curve(&cfg, &samples, &fix.constants, &fix.transform).unwrap();
    assert!(
        check_bound_domination(&honest_curve).unwrap().status == CheckStatus::Pass,
        "C12: honest curve must pass"
    );
    let faulted_curve =
        deviation_curve(&faulted_cfg, &samples, &fix.constants, &fix.transform).unwrap();
    let report = check_bound_domination(&faulted_curve).unwrap();
    assert!(
        report.status == CheckStatus::Fail,
        "C12 FAIL: bound/1e6 not detected ({})",
        report.details
    );

    // (c) Halved K(f) must fail a xi-moment check on an uncentered
    // indicator, whose first moment sits close to K.
    let model = build_two_state_ctmc(1.0, 3.0).unwrap();
    let kernel = resolvent_kernel(&model).unwrap();
    let cert = compute_minorization(&kernel, &[0, 1]).unwrap();
    let f = ObservableSpec::state_indicator("f0", 2, 0).unwrap();
    let mut rng = derive_stream(49, 0, "c12-halve");
    let stream =
        retrospective_regeneration(&model, &cert, &kernel, 0, 120_000, std::slice::from_ref(&f), &mut rng)
            .unwrap();
    let mut rng = derive_stream(49, 1, "c12-halve-cf");
    let cf = estimate_cf_ctmc(&model, &cert, &kernel, &f, 4_000, &mut rng).unwrap();
    let k_f = f.sup_norm + cf.c_f.value;
    let xi = stream.xi_column("f0").unwrap();
    let honest = check_xi_moments(&xi, k_f, 4, &thresholds).unwrap();
    assert!(honest.iter().all(|r| !r.failed()), "C12: honest K must pass");
    let halved = check_xi_moments(&xi, k_f / 2.0, 4, &thresholds).unwrap();
    let halved_failures: Vec<_> = halved
        .iter()
        .filter(|r| r.failed())
        .map(|r| r.check_name.clone())
        .collect();
    assert!(
        !halved_failures.is_empty(),
        "C12 FAIL: halved K not detected"
    );
    passline(
        "C12 negative controls",
        format!(
            "splice fails {:?}; bound/1e6 fails domination; halved K fails {:?}",
            spliced_failures, halved_failures
        ),
    );
}
