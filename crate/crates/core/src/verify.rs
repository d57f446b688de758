//! Statistical verification of the paper-level identities and inequalities:
//! xi-moment bounds, N_t moment bounds and the tail corollary, i.i.d. cycle
//! structure, the heavy-tail index, and bound domination. Every check is a
//! pure function of its inputs and reports a machine-readable pass/fail with
//! the comparison reproduced in `details`. Negative controls (deliberate
//! fault injections) must fail; the suite tests its own power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::DeviationCurve;
use crate::regeneration::NtSamples;
use crate::splitting::{MinorizationCert, RegenerationRecord, RegenerationStream};
use crate::stats::{
    autocorrelation, chi_square_gof, clopper_pearson, hill_estimator, ks_two_sample, mean_and_se,
    sample_variance,
};

/// Statistical thresholds used across the suite; recorded in every report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Thresholds {
    /// Standard-error multiples used for moment/agreement slack.
    pub sigma: f64,
    /// Minimum acceptable p-value for distributional tests.
    pub p_min: f64,
    /// Absolute tolerance on the Hill tail-index estimate.
    pub tail_index_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            sigma: 3.0,
            p_min: 0.01,
            tail_index_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Inapplicable or reported without a pass/fail claim.
    Vacuous,
}

/// JSON maps non-finite floats to null; vacuous checks carry NaN statistics.
mod float_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub status: CheckStatus,
    #[serde(with = "float_or_null")]
    pub statistic: f64,
    #[serde(with = "float_or_null")]
    pub threshold: f64,
    pub details: String,
}

impl CheckReport {
    fn pass_if(name: &str, ok: bool, statistic: f64, threshold: f64, details: String) -> Self {
        Self {
            check_name: name.to_string(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            statistic,
            threshold,
            details,
        }
    }

    fn vacuous(name: &str, details: String) -> Self {
        Self {
            check_name: name.to_string(),
            status: CheckStatus::Vacuous,
            statistic: f64::NAN,
            threshold: f64::NAN,
            details,
        }
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

fn factorial(p: u32) -> f64 {
    (1..=p).map(|k| k as f64).product()
}

/// E|xi_n|^p <= p! K(f)^p for p = 1..p_max. The empirical moment minus
/// `sigma` standard errors is compared against the bound, so a true bound
/// never fails for noise reasons.
pub fn check_xi_moments(
    xi: &[f64],
    k_f: f64,
    p_max: u32,
    thresholds: &Thresholds,
) -> Result<Vec<CheckReport>> {
    if p_max > 4 {
        return Err(Error::InvalidQuery(
            "empirical moments beyond p = 4 are too noisy".into(),
        ));
    }
    if xi.len() < 100_000 {
        return Err(Error::InsufficientData(format!(
            "xi-moment checks need >= 1e5 cycles, got {}",
            xi.len()
        )));
    }
    let mut out = Vec::new();
    for p in 1..=p_max {
        let vals: Vec<f64> = xi.iter().map(|x| x.abs().powi(p as i32)).collect();
        let est = mean_and_se(&vals);
        let stat = est.value - thresholds.sigma * est.stderr;
        let bound = factorial(p) * k_f.powi(p as i32);
        out.push(CheckReport::pass_if(
            &format!("xi_moment_p{p}"),
            stat <= bound,
            stat,
            bound,
            format!(
                "E|xi|^{p} = {} (se {}); mean - {} se = {stat} vs p! K^p = {bound} with K = {k_f}",
                est.value, est.stderr, thresholds.sigma
            ),
        ));
    }
    Ok(out)
}

/// E N_t^p <= p! (v*_t)^p for p = 1..p_max, plus the tail corollary
/// P(N_t > (v*_t)^{1+delta} (x or 1)) <= 2 exp(-(v*_t)^delta (x or 1)/2)
/// at delta = 1/2, x in {1, 2}.
pub fn check_nt_moments(
    nt: &NtSamples,
    p_max: u32,
    thresholds: &Thresholds,
) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for (i, &t) in nt.t_grid.iter().enumerate() {
        let counts = &nt.counts[i];
        if counts.len() < 10_000 {
            return Err(Error::InsufficientData(format!(
                "N_t moment checks need >= 1e4 samples, got {}",
                counts.len()
            )));
        }
        let vstar = nt.vstar[i].value;
        for p in 1..=p_max {
            let vals: Vec<f64> = counts.iter().map(|&n| (n as f64).powi(p as i32)).collect();
            let est = mean_and_se(&vals);
            let stat = est.value - thresholds.sigma * est.stderr;
            let bound = factorial(p) * vstar.powi(p as i32);
            out.push(CheckReport::pass_if(
                &format!("nt_moment_t{t}_p{p}"),
                stat <= bound,
                stat,
                bound,
                format!(
                    "E N_t^{p} = {} (se {}) at t = {t}; mean - {} se vs p!(v*_t)^p with v*_t = {vstar}",
                    est.value, est.stderr, thresholds.sigma
                ),
            ));
        }
        let delta = 0.5;
        for x in [1.0f64, 2.0] {
            let level = vstar.powf(1.0 + delta) * x.max(1.0);
            let k = counts.iter().filter(|&&n| (n as f64) > level).count() as u64;
            let (_, ci_hi) = clopper_pearson(k, counts.len() as u64, 0.99)?;
            let bound = 2.0 * (-0.5 * vstar.powf(delta) * x.max(1.0)).exp();
            let name = format!("nt_tail_t{t}_x{x}");
            // The exact interval cannot resolve probabilities below its
            // zero-success ceiling; such bounds are untestable here.
            let resolution = 1.0 - (0.005f64).powf(1.0 / counts.len() as f64);
            if bound >= 1.0 {
                out.push(CheckReport::vacuous(
                    &name,
                    format!("corollary bound {bound} >= 1 is vacuous"),
                ));
            } else if bound <= resolution {
                out.push(CheckReport::vacuous(
                    &name,
                    format!(
                        "corollary bound {bound} lies below the {0}-sample binomial resolution {resolution}; {k} exceedances observed",
                        counts.len()
                    ),
                ));
            } else {
                out.push(CheckReport::pass_if(
                    &name,
                    ci_hi <= bound,
                    ci_hi,
                    bound,
                    format!(
                        "P(N_t > (v*)^{{1.5}} (x or 1)) ci_high = {ci_hi} vs 2exp(-(v*)^0.5 (x or 1)/2) = {bound}"
                    ),
                ));
            }
        }
    }
    Ok(out)
}

/// Dependence/stationarity bundle:
///  (a) lag-2 autocorrelation of xi within +-sigma/sqrt(N) (the paper grants
///      independence of xi_n from the sigma-field two regenerations back);
///  (a') lag-1 xi autocorrelation is reported without a pass/fail claim;
///  (b) two-sample KS between the first and second halves of the durations;
///  (c) chi-square of cycle start-state frequencies against nu;
///  (d) duration autocorrelations at lags 1 and 2;
///  (e) block agreement of the xi mean and variance.
pub fn check_dependence_structure(
    stream: &RegenerationStream,
    cert: Option<&MinorizationCert>,
    thresholds: &Thresholds,
) -> Result<Vec<CheckReport>> {
    let n = stream.records.len();
    if n < 10_000 {
        return Err(Error::InsufficientData(format!(
            "dependence checks need >= 1e4 cycles, got {n}"
        )));
    }
    let mut out = Vec::new();
    let limit = thresholds.sigma / (n as f64).sqrt();
    let durations = stream.durations();

    for (k, name) in stream.observable_names.iter().enumerate() {
        let xi: Vec<f64> = stream.records.iter().map(|r| r.xi[k]).collect();
        let rho2 = autocorrelation(&xi, 2);
        out.push(CheckReport::pass_if(
            &format!("xi_lag2_autocorr_{name}"),
            rho2.abs() < limit,
            rho2.abs(),
            limit,
            format!("|rho_2(xi_{name})| = {} vs {limit}", rho2.abs()),
        ));
        let rho1 = autocorrelation(&xi, 1);
        out.push(CheckReport::vacuous(
            &format!("xi_lag1_autocorr_{name}"),
            format!(
                "rho_1(xi_{name}) = {rho1}; adjacent cycles may be correlated, reported without a threshold"
            ),
        ));

        // Block stationarity of mean and variance.
        let half = n / 2;
        let (b1, b2) = (&xi[..half], &xi[half..]);
        let (m1, m2) = (mean_and_se(b1), mean_and_se(b2));
        let pooled = (m1.stderr.powi(2) + m2.stderr.powi(2)).sqrt();
        let diff = (m1.value - m2.value).abs();
        out.push(CheckReport::pass_if(
            &format!("xi_block_mean_{name}"),
            diff <= thresholds.sigma * pooled,
            diff,
            thresholds.sigma * pooled,
            format!("block means {} vs {} (pooled se {pooled})", m1.value, m2.value),
        ));
        let (v1, v2) = (sample_variance(b1), sample_variance(b2));
        // se(s^2) ~ sqrt((mu4 - var^2)/n).
        let se_var = |b: &[f64], var: f64| {
            let m = mean_and_se(b).value;
            let mu4 = b.iter().map(|x| (x - m).powi(4)).sum::<f64>() / b.len() as f64;
            ((mu4 - var * var).max(0.0) / b.len() as f64).sqrt()
        };
        let pooled_v = (se_var(b1, v1).powi(2) + se_var(b2, v2).powi(2)).sqrt();
        let diff_v = (v1 - v2).abs();
        out.push(CheckReport::pass_if(
            &format!("xi_block_var_{name}"),
            diff_v <= thresholds.sigma * pooled_v,
            diff_v,
            thresholds.sigma * pooled_v,
            format!("block variances {v1} vs {v2} (pooled se {pooled_v})"),
        ));
    }

    for lag in [1usize, 2] {
        let rho = autocorrelation(&durations, lag);
        out.push(CheckReport::pass_if(
            &format!("duration_lag{lag}_autocorr"),
            rho.abs() < limit,
            rho.abs(),
            limit,
            format!("|rho_{lag}(duration)| = {} vs {limit}", rho.abs()),
        ));
    }

    let half = n / 2;
    let (d, p) = ks_two_sample(&durations[..half], &durations[half..])?;
    out.push(CheckReport::pass_if(
        "duration_block_ks",
        p > thresholds.p_min,
        p,
        thresholds.p_min,
        format!("two-sample KS D = {d}, p = {p} between duration halves"),
    ));

    match (cert, stream.start_states.as_ref()) {
        (Some(cert), Some(starts)) => {
            let n_states = cert.nu().len();
            let mut counts = vec![0u64; n_states];
            for &s in starts {
                counts[s] += 1;
            }
            // Keep only the support of nu.
            let support: Vec<usize> = (0..n_states).filter(|&i| cert.nu()[i] > 0.0).collect();
            let obs: Vec<u64> = support.iter().map(|&i| counts[i]).collect();
            let probs: Vec<f64> = support.iter().map(|&i| cert.nu()[i]).collect();
            let off_support: u64 = (0..n_states)
                .filter(|i| !support.contains(i))
                .map(|i| counts[i])
                .sum();
            if off_support > 0 {
                out.push(CheckReport::pass_if(
                    "start_state_law",
                    false,
                    off_support as f64,
                    0.0,
                    "cycle start states observed outside the support of nu".into(),
                ));
            } else if support.len() < 2 {
                out.push(CheckReport::vacuous(
                    "start_state_law",
                    "nu is a point mass; frequency test trivial".into(),
                ));
            } else {
                let (stat, p) = chi_square_gof(&obs, &probs)?;
                out.push(CheckReport::pass_if(
                    "start_state_law",
                    p > thresholds.p_min,
                    p,
                    thresholds.p_min,
                    format!("chi-square {stat} against nu, p = {p}"),
                ));
            }
        }
        _ => out.push(CheckReport::vacuous(
            "start_state_law",
            "no start-state data or certificate available".into(),
        )),
    }

    Ok(out)
}

/// Hill tail-index check on the top ceil(sqrt(N)) order statistics, with a
/// k/2 and 2k sensitivity report. Light-tailed inputs (estimate far above
/// the stable range) are reported vacuous.
pub fn check_tail_index(
    durations: &[f64],
    alpha_expected: f64,
    thresholds: &Thresholds,
) -> Result<CheckReport> {
    if durations.len() < 1_000_000 {
        return Err(Error::InsufficientData(format!(
            "tail-index check needs >= 1e6 samples, got {}",
            durations.len()
        )));
    }
    let k = (durations.len() as f64).sqrt().ceil() as usize;
    let a_hat = hill_estimator(durations, k)?;
    let a_half = hill_estimator(durations, k / 2)?;
    let a_double = hill_estimator(durations, 2 * k)?;
    if a_hat > 1.5 {
        return Ok(CheckReport::vacuous(
            "tail_index",
            format!(
                "Hill estimate {a_hat} at k = {k} is outside the heavy-tail regime (alpha < 1); light-tailed input"
            ),
        ));
    }
    let err = (a_hat - alpha_expected).abs();
    Ok(CheckReport::pass_if(
        "tail_index",
        err <= thresholds.tail_index_tol,
        a_hat,
        alpha_expected,
        format!(
            "Hill alpha = {a_hat} at k = {k} (k/2: {a_half}, 2k: {a_double}); expected {alpha_expected} +- {}",
            thresholds.tail_index_tol
        ),
    ))
}

/// Pass iff every curve row is dominated (ci_high <= bound or vacuous).
pub fn check_bound_domination(curve: &DeviationCurve) -> Result<CheckReport> {
    if curve.rows.is_empty() {
        return Err(Error::InsufficientData("empty deviation curve".into()));
    }
    let all_ok = curve.rows.iter().all(|r| r.dominated);
    let non_vacuous: Vec<_> = curve.rows.iter().filter(|r| !r.vacuous).collect();
    // Worst margin: most adverse ci_high - bound over non-vacuous rows.
    let worst = non_vacuous
        .iter()
        .map(|r| r.ci_high - r.bound_total)
        .fold(f64::NEG_INFINITY, f64::max);
    let details = if non_vacuous.is_empty() {
        "all rows vacuous (bound >= 1); trivially dominated".to_string()
    } else {
        format!(
            "{} rows, {} non-vacuous, worst margin ci_high - bound = {worst}",
            curve.rows.len(),
            non_vacuous.len()
        )
    };
    Ok(CheckReport::pass_if(
        "bound_domination",
        all_ok,
        if worst.is_finite() { worst } else { f64::NEG_INFINITY },
        0.0,
        details,
    ))
}

// ---------------------------------------------------------------------------
// Fault injection
// ---------------------------------------------------------------------------

/// Negative control: overlap cycles in a rolling window of three, advancing
/// one cycle at a time. Shared cycles across records corrupt the lag-1 and
/// lag-2 structure that honest regeneration guarantees.
pub fn splice_cycles(stream: &RegenerationStream) -> RegenerationStream {
    let n = stream.records.len();
    if n < 3 {
        return stream.clone();
    }
    let window = 3;
    let mut records = Vec::with_capacity(n - window + 1);
    for i in 0..=(n - window) {
        let chunk = &stream.records[i..i + window];
        let duration = chunk.iter().map(|r| r.duration).sum();
        let xi = (0..stream.observable_names.len())
            .map(|k| chunk.iter().map(|r| r.xi[k]).sum())
            .collect();
        records.push(RegenerationRecord {
            index: i as u64 + 2,
            duration,
            xi,
        });
    }
    RegenerationStream {
        initial: stream.initial.clone(),
        records,
        clock_times: None,
        start_states: stream
            .start_states
            .as_ref()
            .map(|s| s[..n - window + 1].to_vec()),
        jump_uniforms: None,
        discarded: stream.discarded,
        observable_names: stream.observable_names.clone(),
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub thresholds: Thresholds,
    pub checks: Vec<CheckReport>,
}

impl VerificationReport {
    pub fn new(thresholds: Thresholds, checks: Vec<CheckReport>) -> Self {
        Self {
            schema_version: 1,
            thresholds,
            checks,
        }
    }

    pub fn all_non_vacuous_pass(&self) -> bool {
        self.checks.iter().all(|c| !c.failed())
    }

    pub fn failing_names(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.failed())
            .map(|c| c.check_name.as_str())
            .collect()
    }

    /// Human-readable summary table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .checks
            .iter()
            .map(|c| c.check_name.len())
            .max()
            .unwrap_or(10)
            .max(10);
        out.push_str(&format!(
            "{:<width$}  {:<8}  {:>14}  {:>14}\n",
            "check", "status", "statistic", "threshold"
        ));
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Vacuous => "vacuous",
            };
            out.push_str(&format!(
                "{:<width$}  {:<8}  {:>14.6e}  {:>14.6e}\n",
                c.check_name, status, c.statistic, c.threshold
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splitting::RegenerationStream;
    use rand::Rng;

    fn iid_stream(n: usize, seed: u64) -> RegenerationStream {
        let mut rng = crate::streams::derive_stream(seed, 0, "verify-test");
        let mut s = RegenerationStream::from_durations(
            1.0,
            (0..n).map(|_| 0.1 + rng.random::<f64>()).collect(),
        );
        s.observable_names = vec!["f".into()];
        for r in s.records.iter_mut() {
            r.xi = vec![rng.random::<f64>() - 0.5];
        }
        s.initial.xi = vec![0.0];
        s
    }

    #[test]
    fn iid_cycles_pass_dependence_checks() {
        let s = iid_stream(20_000, 1);
        let reports = check_dependence_structure(&s, None, &Thresholds::default()).unwrap();
        for r in &reports {
            assert!(!r.failed(), "{} failed: {}", r.check_name, r.details);
        }
    }

    #[test]
    fn spliced_cycles_fail_lag2() {
        let s = iid_stream(20_000, 2);
        let spliced = splice_cycles(&s);
        let reports = check_dependence_structure(&spliced, None, &Thresholds::default()).unwrap();
        let lag2 = reports
            .iter()
            .find(|r| r.check_name == "xi_lag2_autocorr_f")
            .unwrap();
        assert!(lag2.failed(), "splice should corrupt lag-2: {}", lag2.details);
        let dur1 = reports
            .iter()
            .find(|r| r.check_name == "duration_lag1_autocorr")
            .unwrap();
        assert!(dur1.failed());
    }

    #[test]
    fn tail_index_pareto_calibration() {
        let mut rng = crate::streams::derive_stream(3, 0, "pareto");
        let alpha = 0.7;
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| rng.random::<f64>().powf(-1.0 / alpha))
            .collect();
        let report = check_tail_index(&xs, alpha, &Thresholds::default()).unwrap();
        assert!(
            report.status == CheckStatus::Pass,
            "{}: {}",
            report.check_name,
            report.details
        );
    }

    #[test]
    fn tail_index_exponential_is_vacuous() {
        let mut rng = crate::streams::derive_stream(4, 0, "expo");
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| -(rng.random::<f64>()).ln())
            .collect();
        let report = check_tail_index(&xs, 0.5, &Thresholds::default()).unwrap();
        assert_eq!(report.status, CheckStatus::Vacuous, "{}", report.details);
    }

    #[test]
    fn xi_moment_sensitivity_to_halved_k() {
        // Uncentered positive xi with mean near its K bound: halving K must
        // flip at least the p = 1 check.
        let mut rng = crate::streams::derive_stream(5, 0, "xi-moments");
        let xi: Vec<f64> = (0..150_000).map(|_| 1.0 + 0.2 * rng.random::<f64>()).collect();
        let k_f = 1.5;
        let honest = check_xi_moments(&xi, k_f, 4, &Thresholds::default()).unwrap();
        assert!(honest.iter().all(|r| !r.failed()));
        let faulted = check_xi_moments(&xi, k_f / 2.0, 4, &Thresholds::default()).unwrap();
        assert!(faulted.iter().any(|r| r.failed()));
    }
}
