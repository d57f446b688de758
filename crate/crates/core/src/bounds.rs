//! Explicit bound evaluation: the Legendre transform of the cycle-length
//! Laplace transform, the Birge-Massart inequality, the three regimes of the
//! main deviation theorem, the regular-case variant with its t-dependent
//! inner maximization, and the v_t / v*_t sandwich.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regeneration::{ConstantEstimates, LaplacePoint};
use crate::splitting::RegenerationStream;
use crate::stats::Estimate;

/// Cycle-length Laplace transform F(lambda) = E exp(-lambda (R_2 - R_1)).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LaplaceTransform {
    /// Brownian motion, levels (0,1): F(lambda) = exp(-2 sqrt(2 lambda)).
    BrownianLevels01,
    /// Unit-mean synthetic transform 1/(1+lambda); handy as a closed-form
    /// test case.
    SyntheticUnitMean,
    /// Tabulated transform (typically empirical), interpolated linearly in
    /// (lambda, -log F).
    Table(Vec<LaplacePoint>),
}

impl LaplaceTransform {
    /// Build a table from the stationary cycles of a stream on a fixed
    /// log-spaced grid.
    pub fn from_stream(stream: &RegenerationStream, lambda_max: f64) -> Result<Self> {
        let grid = log_grid(1e-4, lambda_max, 160);
        let points = crate::regeneration::laplace_table(stream, &grid)?;
        Ok(LaplaceTransform::Table(points))
    }

    pub fn value(&self, lambda: f64) -> f64 {
        (-self.neg_log(lambda)).exp()
    }

    /// -log F(lambda); nonnegative and nondecreasing.
    pub fn neg_log(&self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        match self {
            LaplaceTransform::BrownianLevels01 => 2.0 * (2.0 * lambda).sqrt(),
            LaplaceTransform::SyntheticUnitMean => (1.0 + lambda).ln(),
            LaplaceTransform::Table(points) => {
                // Linear interpolation in lambda of -log F, anchored at
                // (0, 0); beyond the last knot extend with the final slope.
                let nl = |p: &LaplacePoint| -> f64 { -p.value.max(1e-300).ln() };
                if points.is_empty() {
                    return 0.0;
                }
                let first = &points[0];
                if lambda <= first.lambda {
                    return nl(first) * lambda / first.lambda;
                }
                for w in points.windows(2) {
                    if lambda <= w[1].lambda {
                        let f = (lambda - w[0].lambda) / (w[1].lambda - w[0].lambda);
                        return nl(&w[0]) + f * (nl(&w[1]) - nl(&w[0]));
                    }
                }
                let k = points.len() - 1;
                let slope = if k == 0 {
                    nl(&points[0]) / points[0].lambda
                } else {
                    (nl(&points[k]) - nl(&points[k - 1]))
                        / (points[k].lambda - points[k - 1].lambda)
                };
                nl(&points[k]) + slope * (lambda - points[k].lambda)
            }
        }
    }

    /// Sanity check of the evaluator on a sample of points: values must lie
    /// in (0, 1] and be nonincreasing.
    fn validate(&self, lambda_hi: f64) -> Result<()> {
        let mut prev = 1.0 + 1e-12;
        for &l in &log_grid(1e-6, lambda_hi.max(1e-5), 40) {
            let v = self.value(l);
            if !(v > 0.0) || v > 1.0 + 1e-9 {
                return Err(Error::InvalidQuery(format!(
                    "invalid Laplace transform: F({l}) = {v} outside (0, 1]"
                )));
            }
            if v > prev + 1e-9 {
                return Err(Error::InvalidQuery(format!(
                    "invalid Laplace transform: not nonincreasing at lambda = {l}"
                )));
            }
            prev = v;
        }
        Ok(())
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Maximize a concave function on [0, hi] by golden-section search.
fn golden_max(g: impl Fn(f64) -> f64, hi: f64, rel_tol: f64) -> (f64, f64) {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..200 {
        if b - a <= rel_tol * b.abs().max(1e-300) {
            break;
        }
        if gc >= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + phi * (b - a);
            gd = g(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, g(x))
}

/// Bracket the maximizer of a concave g with g(0) = 0 by doubling from a tiny
/// seed until the objective decreases, then golden-section. Returns sup g
/// clipped at zero.
fn maximize_concave(g: impl Fn(f64) -> f64, lambda_cap: f64) -> f64 {
    let mut hi = 1e-9_f64.min(lambda_cap / 4.0).max(1e-300);
    let mut best = g(hi);
    loop {
        let next = hi * 2.0;
        if next > lambda_cap {
            break;
        }
        let v = g(next);
        if v < best && best > 0.0 {
            hi = next;
            break;
        }
        best = best.max(v);
        hi = next;
    }
    let (_, sup) = golden_max(&g, hi, 1e-8);
    sup.max(best).max(0.0)
}

/// Legendre transform of the cycle-length law:
/// Lambda*(u) = sup_{lambda>0} [ -lambda u - log F(lambda) ], clipped at 0
/// (the supremum is nonpositive once u reaches the mean cycle length).
pub fn legendre_star(transform: &LaplaceTransform, u: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::InvalidQuery(format!("u = {u} must be positive")));
    }
    // Cap prevents exp overflow on empirical tables whose smallest duration
    // exceeds u; the capped region contributes e^{-50}-scale mass.
    let cap = 50.0 / u;
    transform.validate(cap)?;
    let g = |l: f64| transform.neg_log(l) - l * u;
    Ok(maximize_concave(g, cap))
}

/// The regular-regime inner maximization
/// Lambda*_t = sup_lambda [ -log F(lambda) s_t^alpha / L(t) - lambda s_t ]
/// with s_t = t^{1 - 2 eta / (2 - alpha)}.
pub fn lambda_star_t(
    transform: &LaplaceTransform,
    alpha: f64,
    eta: f64,
    t: f64,
    l_t: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidQuery("alpha must lie in (0,1)".into()));
    }
    if !(eta > 0.0 && eta <= alpha / 2.0) {
        return Err(Error::InvalidQuery("eta must lie in (0, alpha/2]".into()));
    }
    if !(l_t > 0.0) || !(t > 1.0) {
        return Err(Error::InvalidQuery("need L(t) > 0 and t > 1".into()));
    }
    let s_t = t.powf(1.0 - 2.0 * eta / (2.0 - alpha));
    let sa = s_t.powf(alpha);
    let cap = 1e3 / s_t;
    transform.validate(cap)?;
    let g = |l: f64| transform.neg_log(l) * sa / l_t - l * s_t;
    Ok(maximize_concave(g, cap))
}

/// sup_{0<lambda<1/v} [lambda y - lambda^2 v^2 / (1 - lambda v)] via the
/// closed-form maximizer lambda* = (1/v)(1 - sqrt(v/(y+v))), together with
/// the lower bound y^2 / (2vy + 4v^2). The supremum dominates the bound.
pub fn birge_massart(y: f64, v: f64) -> Result<(f64, f64)> {
    if !(y > 0.0 && v > 0.0) {
        return Err(Error::InvalidQuery("birge_massart needs y, v > 0".into()));
    }
    let lambda_star = (1.0 - (v / (y + v)).sqrt()) / v;
    let sup = lambda_star * y - lambda_star * lambda_star * v * v / (1.0 - lambda_star * v);
    let lower = y * y / (2.0 * v * y + 4.0 * v * v);
    if sup < lower - 1e-12 * lower.abs().max(1.0) {
        return Err(Error::Numeric(format!(
            "Birge-Massart inequality violated: sup {sup} < lower bound {lower}"
        )));
    }
    Ok((sup, lower))
}

/// Bound regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundRegime {
    /// Positive recurrent, eta in (0, 1/2].
    PositiveEta,
    /// Positive recurrent CLT scaling (no eta).
    PositiveClt,
    /// Null recurrent, general case on the v*_t scale.
    NullGeneral,
    /// Null-recurrent regular case (stable index alpha).
    Regular,
}

impl std::fmt::Display for BoundRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BoundRegime::PositiveEta => "positive_eta",
            BoundRegime::PositiveClt => "positive_clt",
            BoundRegime::NullGeneral => "null_general",
            BoundRegime::Regular => "regular",
        };
        write!(f, "{s}")
    }
}

/// A bound evaluation request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundQuery {
    pub regime: BoundRegime,
    pub t: f64,
    pub x: f64,
    /// Deviation exponent; required except in the CLT regime.
    pub eta_dev: Option<f64>,
    /// Stable index (regular regime only).
    pub alpha_reg: Option<f64>,
    /// Slowly-varying value L(t) (regular regime only); analytic for the
    /// Brownian example.
    pub l_t: Option<f64>,
}

/// The evaluated right-hand side, split into its three named summands.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundValue {
    pub gaussian_term: f64,
    pub exponential_term: f64,
    pub clock_term: f64,
    pub total: f64,
    pub vacuous: bool,
}

impl BoundValue {
    fn from_terms(gaussian: f64, exponential: f64, clock: f64) -> Self {
        let total = gaussian + exponential + clock;
        Self {
            gaussian_term: gaussian,
            exponential_term: exponential,
            clock_term: clock,
            total,
            vacuous: total >= 1.0,
        }
    }
}

const E: f64 = std::f64::consts::E;

/// Deviation threshold on the left-hand side of the selected display:
/// positive: t^{1/2+eta} (2/m)^{1/2+eta} x (eta = 0 in the CLT regime);
/// null: (v*_t)^{1/2+eta} x; regular: t^{alpha/2+eta} x.
pub fn deviation_threshold(q: &BoundQuery, constants: &ConstantEstimates) -> Result<f64> {
    let m = constants.m_hat.value;
    match q.regime {
        BoundRegime::PositiveEta => {
            let eta = required_eta(q, 0.5)?;
            Ok(q.t.powf(0.5 + eta) * (2.0 / m).powf(0.5 + eta) * q.x)
        }
        BoundRegime::PositiveClt => Ok(q.t.sqrt() * (2.0 / m).sqrt() * q.x),
        BoundRegime::NullGeneral => {
            let eta = required_eta(q, 0.5)?;
            let v = vstar_for(q, constants)?;
            Ok(v.powf(0.5 + eta) * q.x)
        }
        BoundRegime::Regular => {
            let alpha = q
                .alpha_reg
                .ok_or_else(|| Error::InvalidQuery("regular regime needs alpha_reg".into()))?;
            let eta = required_eta(q, alpha / 2.0)?;
            Ok(q.t.powf(alpha / 2.0 + eta) * q.x)
        }
    }
}

fn required_eta(q: &BoundQuery, max_eta: f64) -> Result<f64> {
    let eta = q
        .eta_dev
        .ok_or_else(|| Error::InvalidQuery("regime requires eta_dev".into()))?;
    if !(eta > 0.0 && eta <= max_eta + 1e-12) {
        return Err(Error::InvalidQuery(format!(
            "eta_dev = {eta} outside (0, {max_eta}]"
        )));
    }
    Ok(eta)
}

fn vstar_for(q: &BoundQuery, constants: &ConstantEstimates) -> Result<f64> {
    constants
        .vstar_at(q.t)
        .map(|e| e.value)
        .ok_or_else(|| Error::InvalidQuery(format!("no v*_t estimate at t = {}", q.t)))
}

/// Exact arithmetic transcription of the selected theorem display.
pub fn evaluate_bound(
    q: &BoundQuery,
    constants: &ConstantEstimates,
    transform: &LaplaceTransform,
) -> Result<BoundValue> {
    if !(q.x > 0.0) {
        return Err(Error::InvalidQuery("deviation level x must be > 0".into()));
    }
    let m = constants.m_hat.value;
    let k_f = constants.k_f;
    let b_f = constants.b_f;
    let x = q.x;
    let t = q.t;
    let x2x = (x * x).min(x);
    let xv1 = x.max(1.0);
    match q.regime {
        BoundRegime::PositiveEta => {
            let eta = required_eta(q, 0.5)?;
            if !(t > 4.0 * m) {
                return Err(Error::InvalidQuery(format!(
                    "positive regime requires t > 4m = {}",
                    4.0 * m
                )));
            }
            let lam = legendre_star(transform, 2.0 * m / 3.0)?;
            let gaussian = 4.0 * (-t.powf(2.0 * eta) * x2x / (42.0 * m * b_f)).exp();
            let exponential = 4.0
                * E
                * (-(2f64.powf(0.5 + eta) / (6.0 * k_f * m.powf(0.5 + eta)))
                    * t.powf(0.5 + eta)
                    * x)
                    .exp();
            let clock = 8.0 * (-t * xv1 * 3.0 / (4.0 * m) * lam).exp();
            Ok(BoundValue::from_terms(gaussian, exponential, clock))
        }
        BoundRegime::PositiveClt => {
            if !(t > 4.0 * m) {
                return Err(Error::InvalidQuery(format!(
                    "positive regime requires t > 4m = {}",
                    4.0 * m
                )));
            }
            let lam = legendre_star(transform, 2.0 * m / 3.0)?;
            let gaussian = 4.0 * (-x2x / (42.0 * b_f)).exp();
            let exponential =
                4.0 * E * (-(2f64.sqrt() / (6.0 * k_f * m.sqrt())) * t.sqrt() * x).exp();
            let clock = 8.0 * (-t * xv1 * 3.0 / (4.0 * m) * lam).exp();
            Ok(BoundValue::from_terms(gaussian, exponential, clock))
        }
        BoundRegime::NullGeneral => {
            let eta = required_eta(q, 0.5)?;
            let v = vstar_for(q, constants)?;
            if !(v >= 1.0) {
                return Err(Error::InvalidQuery(format!(
                    "null regime requires v*_t >= 1 (t at least t0), got {v}"
                )));
            }
            let gaussian = 4.0 * (-v.powf(eta) * x2x / (42.0 * b_f)).exp();
            let exponential = 4.0 * E * (-v.powf(0.5 + eta) * x / (6.0 * k_f)).exp();
            let clock = 8.0 * (-0.5 * v.powf(eta) * xv1).exp();
            Ok(BoundValue::from_terms(gaussian, exponential, clock))
        }
        BoundRegime::Regular => {
            let alpha = q
                .alpha_reg
                .ok_or_else(|| Error::InvalidQuery("regular regime needs alpha_reg".into()))?;
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidQuery("alpha_reg must lie in (0,1)".into()));
            }
            let eta = required_eta(q, alpha / 2.0)?;
            let l_t = q
                .l_t
                .ok_or_else(|| Error::InvalidQuery("regular regime needs l_t".into()))?;
            // t0 is fixed by (t^gamma / L(t)) t^{-alpha/2 - eta} >= 1 with
            // gamma = alpha + 2 eta (1-alpha)/(2-alpha).
            let gamma = alpha + 2.0 * eta * (1.0 - alpha) / (2.0 - alpha);
            if t.powf(gamma - alpha / 2.0 - eta) < l_t {
                return Err(Error::InvalidQuery(format!(
                    "t = {t} below the regular-regime threshold t0"
                )));
            }
            let lam_t = lambda_star_t(transform, alpha, eta, t, l_t)?;
            let rate = t.powf(2.0 * eta / (2.0 - alpha));
            let gaussian = 4.0 * (-rate * x2x * l_t / (42.0 * b_f)).exp();
            let exponential =
                4.0 * E * (-t.powf(alpha / 2.0 + eta) * x / (6.0 * k_f)).exp();
            let clock = 8.0 * (-0.5 * rate * xv1 * lam_t).exp();
            Ok(BoundValue::from_terms(gaussian, exponential, clock))
        }
    }
}

/// Result of the v_t / v*_t sandwich check:
/// v_t <= C(g) + mu(g) v*_t and v_t >= mu(g) v*_t - 2 C(g),
/// tested with three pooled standard errors of slack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichReport {
    pub upper_pass: bool,
    pub lower_pass: bool,
    pub upper_slack: f64,
    pub lower_slack: f64,
    pub pooled_se: f64,
}

impl SandwichReport {
    pub fn pass(&self) -> bool {
        self.upper_pass && self.lower_pass
    }
}

pub fn vstar_sandwich(
    v_t: Estimate,
    vstar_t: Estimate,
    c_g: f64,
    mu_g: Estimate,
) -> Result<SandwichReport> {
    if !(v_t.value > 0.0 && vstar_t.value > 0.0 && mu_g.value > 0.0) || c_g < 0.0 {
        return Err(Error::InvalidQuery(
            "sandwich needs positive v_t, v*_t, mu(g) and nonnegative C(g)".into(),
        ));
    }
    let pooled_se = (v_t.stderr.powi(2)
        + (mu_g.value * vstar_t.stderr).powi(2)
        + (vstar_t.value * mu_g.stderr).powi(2))
    .sqrt();
    let slack = 3.0 * pooled_se;
    // Upper: v_t - (C + mu v*) <= 3 se.
    let upper_gap = v_t.value - (c_g + mu_g.value * vstar_t.value);
    // Lower: (mu v* - 2C) - v_t <= 3 se.
    let lower_gap = (mu_g.value * vstar_t.value - 2.0 * c_g) - v_t.value;
    Ok(SandwichReport {
        upper_pass: upper_gap <= slack,
        lower_pass: lower_gap <= slack,
        upper_slack: -upper_gap,
        lower_slack: -lower_gap,
        pooled_se,
    })
}

/// One row of an exported bound table.
#[derive(Debug, Clone, Serialize)]
pub struct BoundTableRow {
    pub regime: String,
    pub t: f64,
    pub x: f64,
    pub eta: f64,
    pub gaussian_term: f64,
    pub exponential_term: f64,
    pub clock_term: f64,
    pub total: f64,
    pub vacuous: bool,
}

pub fn write_bound_table<W: Write>(rows: &[BoundTableRow], mut w: W) -> Result<()> {
    writeln!(
        w,
        "regime,t,x,eta,gaussian_term,exponential_term,clock_term,total,vacuous"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.regime,
            r.t,
            r.x,
            r.eta,
            r.gaussian_term,
            r.exponential_term,
            r.clock_term,
            r.total,
            r.vacuous
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Estimate;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn legendre_synthetic_closed_form() {
        // F = 1/(1+lambda), u = 2/3: stationary point lambda = 1/2, value
        // log(3/2) - 1/3.
        let f = LaplaceTransform::SyntheticUnitMean;
        let got = legendre_star(&f, 2.0 / 3.0).unwrap();
        let expected = 1.5f64.ln() - 1.0 / 3.0;
        assert!(close(got, expected, 1e-6 * expected), "got {got}");
    }

    #[test]
    fn legendre_clips_to_zero_beyond_mean() {
        let f = LaplaceTransform::SyntheticUnitMean;
        assert_eq!(legendre_star(&f, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn legendre_positive_for_all_u_on_infinite_mean_transform() {
        let f = LaplaceTransform::BrownianLevels01;
        for &u in &[0.1, 1.0, 10.0, 1e3] {
            let v = legendre_star(&f, u).unwrap();
            assert!(v > 0.0, "Lambda*({u}) = {v}");
        }
    }

    #[test]
    fn legendre_nonincreasing_in_u() {
        let f = LaplaceTransform::SyntheticUnitMean;
        let mut prev = f64::INFINITY;
        for &u in &[0.1, 0.2, 0.4, 0.6, 0.8, 0.95] {
            let v = legendre_star(&f, u).unwrap();
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn birge_massart_spot_value() {
        let (sup, lower) = birge_massart(1.0, 1.0).unwrap();
        assert!(close(sup, 0.17157287525381, 1e-9), "sup={sup}");
        assert!(close(lower, 1.0 / 6.0, 1e-12));
        assert!(sup >= lower);
    }

    #[test]
    fn birge_massart_vanishes_as_y_shrinks() {
        // Both sides are O(y^2); below y ~ 1e-6 they agree to machine
        // precision, so the comparison needs an ulp of slack.
        let mut prev = f64::INFINITY;
        for &y in &[1e-2, 1e-4, 1e-6, 1e-8] {
            let (sup, lower) = birge_massart(y, 1.0).unwrap();
            assert!(sup < prev && sup >= 0.0);
            assert!(lower <= sup * (1.0 + 1e-6) + 1e-300);
            prev = sup;
        }
        let (sup, lower) = birge_massart(1e-12, 1.0).unwrap();
        assert!(sup < 1e-11 && lower < 1e-11);
    }

    #[test]
    fn birge_massart_maximizer_matches_grid_search() {
        let cases = [(1.0, 1.0), (0.3, 2.0), (5.0, 0.7), (9.9, 9.9)];
        for (y, v) in cases {
            let (sup, _) = birge_massart(y, v).unwrap();
            let mut grid_best = f64::NEG_INFINITY;
            let n = 200_000;
            for i in 1..n {
                let l = (i as f64 / n as f64) / v;
                let val = l * y - l * l * v * v / (1.0 - l * v);
                grid_best = grid_best.max(val);
            }
            assert!(
                (sup - grid_best).abs() <= 1e-6 * sup.abs().max(1e-12),
                "closed form {sup} vs grid {grid_best} at (y={y}, v={v})"
            );
            assert!(sup >= grid_best - 1e-12);
        }
    }

    #[test]
    fn regular_floor_at_alpha_half() {
        // Exact transform and constant L collapse the inner maximization to
        // sup_w [sqrt(w) - w] = 1/4 for every t.
        let f = LaplaceTransform::BrownianLevels01;
        let l_t = 2.0 * 2.0f64.sqrt();
        let v = lambda_star_t(&f, 0.5, 0.25, 1e6, l_t).unwrap();
        assert!(close(v, 0.25, 1e-6), "Lambda*_t = {v}");
        assert!(v >= 0.9 * 0.25);
    }

    fn dummy_constants(m: f64, k: f64) -> ConstantEstimates {
        ConstantEstimates {
            sup_norm: 1.0,
            c_f: Estimate::exact(k - 1.0),
            k_f: k,
            b_f: (k * k).max(k),
            m_hat: Estimate::exact(m),
            vstar: vec![crate::regeneration::VstarPoint {
                t: 100.0,
                value: 41.0,
                stderr: 0.5,
            }],
            laplace: Vec::new(),
        }
    }

    #[test]
    fn bound_rejects_small_t_in_positive_regime() {
        let c = dummy_constants(2.5, 1.75);
        let q = BoundQuery {
            regime: BoundRegime::PositiveEta,
            t: 9.0, // 4m = 10
            x: 1.0,
            eta_dev: Some(0.5),
            alpha_reg: None,
            l_t: None,
        };
        assert!(evaluate_bound(&q, &c, &LaplaceTransform::SyntheticUnitMean).is_err());
    }

    #[test]
    fn bound_monotone_in_x_and_t() {
        let c = dummy_constants(1.0, 1.75);
        let f = LaplaceTransform::SyntheticUnitMean;
        for regime in [BoundRegime::PositiveEta, BoundRegime::PositiveClt] {
            let mut prev = f64::INFINITY;
            for k in 0..8 {
                let x = 0.25 * 2f64.powi(k);
                let q = BoundQuery {
                    regime,
                    t: 50.0,
                    x,
                    eta_dev: Some(0.5),
                    alpha_reg: None,
                    l_t: None,
                };
                let b = evaluate_bound(&q, &c, &f).unwrap();
                assert!(b.total <= prev + 1e-12, "x-monotonicity in {regime}");
                prev = b.total;
            }
            let mut prev = f64::INFINITY;
            for k in 0..6 {
                let t = 10.0 * 2f64.powi(k);
                let q = BoundQuery {
                    regime,
                    t,
                    x: 2.0,
                    eta_dev: Some(0.5),
                    alpha_reg: None,
                    l_t: None,
                };
                let b = evaluate_bound(&q, &c, &f).unwrap();
                assert!(b.total <= prev + 1e-12, "t-monotonicity in {regime}");
                prev = b.total;
            }
        }
    }

    #[test]
    fn bound_terms_sum_to_total() {
        let c = dummy_constants(1.0, 1.75);
        let q = BoundQuery {
            regime: BoundRegime::NullGeneral,
            t: 100.0,
            x: 2.0,
            eta_dev: Some(0.5),
            alpha_reg: None,
            l_t: None,
        };
        let b = evaluate_bound(&q, &c, &LaplaceTransform::BrownianLevels01).unwrap();
        assert!(b.gaussian_term >= 0.0 && b.exponential_term >= 0.0 && b.clock_term >= 0.0);
        assert!(close(
            b.total,
            b.gaussian_term + b.exponential_term + b.clock_term,
            1e-15
        ));
    }

    #[test]
    fn bound_rejects_missing_alpha_in_regular_regime() {
        let c = dummy_constants(1.0, 1.75);
        let q = BoundQuery {
            regime: BoundRegime::Regular,
            t: 1e4,
            x: 1.0,
            eta_dev: Some(0.25),
            alpha_reg: None,
            l_t: Some(2.0 * 2.0f64.sqrt()),
        };
        assert!(evaluate_bound(&q, &c, &LaplaceTransform::BrownianLevels01).is_err());
    }

    #[test]
    fn sandwich_interior_point_passes() {
        // v_t = mu v* exactly: upper slack C, lower slack 2C.
        let r = vstar_sandwich(
            Estimate::exact(500.0),
            Estimate::exact(400.0),
            1.3,
            Estimate::exact(1.25),
        )
        .unwrap();
        assert!(r.pass());
        assert!(close(r.upper_slack, 1.3, 1e-9));
        assert!(close(r.lower_slack, 2.6, 1e-9));
    }

    #[test]
    fn sandwich_degenerate_cg_zero() {
        // C(g) = 0 collapses both inequalities to v_t = mu v*; disagreeing
        // exact estimates must fail.
        let r = vstar_sandwich(
            Estimate::exact(500.0),
            Estimate::exact(400.0),
            0.0,
            Estimate::exact(1.3),
        )
        .unwrap();
        assert!(!r.pass());
        let r = vstar_sandwich(
            Estimate::exact(520.0),
            Estimate::exact(400.0),
            0.0,
            Estimate::exact(1.3),
        )
        .unwrap();
        assert!(r.pass());
    }
}
